#include "pcn/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "pcn/kdtree.hpp"
#include "pcn/rng.hpp"

namespace pcn {

namespace {

constexpr std::uint64_t kCenterStream = 0xCE17E5;
constexpr std::uint64_t kPatchStream = 0x9A7C4;
constexpr std::uint64_t kShuffleStream = 0x54F1E;

struct Batch {
    TensorPtr gt_normals;  // [B,3]
    TensorPtr labels;      // [B,K]
};

TensorPtr batch_coords(const PatchDataset& dataset, const std::vector<std::size_t>& idx,
                       std::size_t radius_index) {
    std::vector<const Patch*> ptrs;
    ptrs.reserve(idx.size());
    for (std::size_t i : idx) ptrs.push_back(&dataset.samples[i].per_radius[radius_index]);
    return patch_coords_tensor(ptrs);
}

Batch batch_targets(const PatchDataset& dataset, const std::vector<std::size_t>& idx,
                    std::size_t radius_index) {
    std::size_t b = idx.size(), k = dataset.k;
    std::vector<double> normals(b * 3), labels(b * k);
    for (std::size_t i = 0; i < b; ++i) {
        const Patch& p = dataset.samples[idx[i]].per_radius[radius_index];
        if (p.plane_labels.size() != k) throw Error("train: patch without labels");
        for (int a = 0; a < 3; ++a) normals[i * 3 + a] = p.gt_center_normal[a];
        for (std::size_t j = 0; j < k; ++j) labels[i * k + j] = p.plane_labels[j];
    }
    Batch out;
    out.gt_normals = tensor({b, 3}, std::move(normals));
    out.labels = tensor({b, k}, std::move(labels));
    return out;
}

void check_loss_finite(const TensorPtr& loss, std::size_t epoch, std::size_t batch) {
    if (!std::isfinite(loss->item()))
        throw Error("train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                    std::to_string(batch + 1));
}

}  // namespace

std::vector<std::size_t> epoch_order(std::size_t dataset_size, std::uint64_t seed,
                                     std::size_t epoch) {
    Rng rng(Rng::derive(seed, kShuffleStream + epoch));
    return rng.permutation(dataset_size);
}

PatchDataset build_dataset(const std::vector<PointCloud>& shapes, const TrainConfig& config) {
    if (shapes.empty()) throw Error("build_dataset: no shapes");
    if (config.radii.empty()) throw Error("build_dataset: no radii");
    for (std::size_t r = 1; r < config.radii.size(); ++r)
        if (config.radii[r] <= config.radii[r - 1])
            throw Error("build_dataset: radii must be sorted and distinct");
    PatchDataset ds;
    ds.radii = config.radii;
    ds.k = config.k;
    for (std::size_t shape_id = 0; shape_id < shapes.size(); ++shape_id) {
        const PointCloud& cloud = shapes[shape_id];
        if (!cloud.has_normals())
            throw Error("build_dataset: shape '" + cloud.name + "' has no ground-truth normals");
        ds.shape_names.push_back(cloud.name);
        KdTree tree(cloud.points);
        Rng centers_rng(Rng::derive(config.seed, kCenterStream + shape_id));
        std::size_t count = std::min(config.patches_per_shape, cloud.size());
        auto centers = centers_rng.sample_without_replacement(cloud.size(), count);
        for (std::size_t center : centers) {
            PatchDataset::Sample sample;
            sample.shape_id = shape_id;
            sample.center = center;
            for (std::size_t ri = 0; ri < config.radii.size(); ++ri) {
                std::uint64_t patch_seed = Rng::derive(
                    Rng::derive(config.seed, kPatchStream + shape_id),
                    center * config.radii.size() + ri);
                Patch p = extract_patch(cloud, tree, center, config.radii[ri], config.k,
                                        patch_seed);
                compute_labels(p, config.labels);
                sample.per_radius.push_back(std::move(p));
            }
            ds.samples.push_back(std::move(sample));
        }
    }
    return ds;
}

std::vector<EpochStats> train_single(const PatchDataset& dataset, SingleScaleModel& model,
                                     const TrainConfig& config, std::size_t radius_index,
                                     const EpochCallback& on_epoch) {
    if (dataset.samples.empty()) throw Error("train_single: empty dataset");
    if (radius_index >= dataset.radii.size())
        throw Error("train_single: radius index out of range");
    if (dataset.k != model.cfg.k)
        throw Error("train_single: dataset patch size " + std::to_string(dataset.k) +
                    " does not match model k " + std::to_string(model.cfg.k));
    auto params = model.params();
    SgdState opt = make_sgd(params, config.learning_rate, config.momentum);
    std::vector<EpochStats> history;
    std::size_t n = dataset.size();
    std::size_t bs = config.batch_size_single;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        auto perm = epoch_order(n, config.seed, epoch);
        EpochStats stats;
        for (std::size_t start = 0, bi = 0; start < n; start += bs, ++bi) {
            std::vector<std::size_t> idx(perm.begin() + start,
                                         perm.begin() + std::min(start + bs, n));
            auto coords = batch_coords(dataset, idx, radius_index);
            auto targets = batch_targets(dataset, idx, radius_index);
            auto out = single_forward(model, coords);
            auto l_n = loss_normal(out.normal, targets.gt_normals);
            auto l_m = loss_plane(out.plane_probs, targets.labels);
            auto l = loss_total(l_n, l_m);
            check_loss_finite(l, epoch, bi);
            backward(l);
            sgd_step(params, opt);
            double w = static_cast<double>(idx.size());
            stats.l_normal += l_n->item() * w;
            stats.l_main += l_m->item() * w;
            stats.l_total += l->item() * w;
        }
        stats.l_normal /= static_cast<double>(n);
        stats.l_main /= static_cast<double>(n);
        stats.l_total /= static_cast<double>(n);
        history.push_back(stats);
        if (on_epoch) on_epoch(epoch, stats);
    }
    return history;
}

std::vector<EpochStats> train_multi(const PatchDataset& dataset, MultiScaleModel& model,
                                    const TrainConfig& config, const EpochCallback& on_epoch) {
    if (dataset.samples.empty()) throw Error("train_multi: empty dataset");
    std::size_t s_count = model.subnets.size();
    if (dataset.radii.size() != s_count)
        throw Error("train_multi: dataset has " + std::to_string(dataset.radii.size()) +
                    " radii for " + std::to_string(s_count) + " subnets");
    if (dataset.k != model.subnets[0].cfg.k)
        throw Error("train_multi: dataset patch size does not match model k");

    std::vector<TensorPtr> params;
    if (config.freeze_subnets) {
        for (auto& sub : model.subnets) sub.set_requires_grad(false);
        params = model.scale_net_params();
    } else {
        params = model.params();
    }
    SgdState opt = make_sgd(params, config.learning_rate, config.momentum);
    std::vector<EpochStats> history;
    std::size_t n = dataset.size();
    std::size_t bs = config.batch_size_multi;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        auto perm = epoch_order(n, config.seed, epoch);
        EpochStats stats;
        for (std::size_t start = 0, bi = 0; start < n; start += bs, ++bi) {
            std::vector<std::size_t> idx(perm.begin() + start,
                                         perm.begin() + std::min(start + bs, n));
            std::vector<TensorPtr> coords;
            std::vector<Batch> targets;
            for (std::size_t s = 0; s < s_count; ++s) {
                coords.push_back(batch_coords(dataset, idx, s));
                targets.push_back(batch_targets(dataset, idx, s));
            }
            auto out = multi_forward(model, coords);
            std::vector<TensorPtr> normal_losses, plane_losses;
            for (std::size_t s = 0; s < s_count; ++s) {
                normal_losses.push_back(
                    per_patch_normal_loss(out.per_scale[s].normal, targets[s].gt_normals));
                plane_losses.push_back(
                    loss_plane(out.per_scale[s].plane_probs, targets[s].labels));
            }
            auto l = loss_multi_parts(normal_losses, plane_losses, out.scale_weights);
            check_loss_finite(l.total, epoch, bi);
            backward(l.total);
            sgd_step(params, opt);
            if (config.freeze_subnets)
                for (auto& sub : model.subnets)
                    for (auto& p : sub.params()) p->grad.clear();

            double w = static_cast<double>(idx.size());
            stats.l_normal += l.normal_term->item() * w;
            stats.l_main += l.plane_term->item() * w;
            stats.l_total += l.total->item() * w;
        }
        stats.l_normal /= static_cast<double>(n);
        stats.l_main /= static_cast<double>(n);
        stats.l_total /= static_cast<double>(n);
        history.push_back(stats);
        if (on_epoch) on_epoch(epoch, stats);
    }
    if (config.freeze_subnets)
        for (auto& sub : model.subnets) sub.set_requires_grad(true);
    return history;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot open file for writing");
    out << "epoch,l_normal,l_main,l_total\n";
    char buf[120];
    for (std::size_t e = 0; e < history.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e + 1, history[e].l_normal,
                      history[e].l_main, history[e].l_total);
        out << buf;
    }
    if (!out) throw Error(path + ": write failed");
}

}  // namespace pcn
