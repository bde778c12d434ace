#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "pcn/evaluate.hpp"
#include "pcn/ply.hpp"
#include "pcn/rng.hpp"
#include "pcn/synthetic.hpp"
#include "pcn/trainer.hpp"

namespace fs = std::filesystem;
using namespace pcn;

namespace {

struct UsageError : Error {
    using Error::Error;
};

std::string with_extension(const std::string& path, const std::string& ext) {
    fs::path p(path);
    p.replace_extension(ext);
    return p.string();
}

std::vector<double> parse_double_list(const std::string& s, const char* what) {
    std::vector<double> out;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (tok.empty()) continue;
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw UsageError(std::string(what) + ": bad number '" + tok + "'");
        }
    }
    if (out.empty()) throw UsageError(std::string(what) + ": empty list");
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& s, const char* what) {
    std::vector<std::size_t> out;
    for (double v : parse_double_list(s, what)) {
        if (v < 1 || v != std::floor(v))
            throw UsageError(std::string(what) + ": expected positive integers");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

// "plane,sphere,dihedral:90" x noise levels -> labeled clouds
std::vector<PointCloud> build_synthetic(const std::string& spec,
                                        const std::vector<double>& noise_levels,
                                        std::size_t n_points, std::uint64_t seed) {
    std::vector<PointCloud> shapes;
    std::istringstream in(spec);
    std::string tok;
    std::size_t shape_idx = 0;
    while (std::getline(in, tok, ',')) {
        if (tok.empty()) continue;
        std::string kind = tok;
        ShapeParams params;
        auto colon = tok.find(':');
        if (colon != std::string::npos) {
            kind = tok.substr(0, colon);
            params.dihedral_angle_deg = std::stod(tok.substr(colon + 1));
        }
        for (std::size_t ni = 0; ni < noise_levels.size(); ++ni) {
            auto cloud = gen_shape(kind, params, n_points,
                                   Rng::derive(seed, 1000 * shape_idx + ni));
            double sigma = noise_levels[ni];
            if (sigma > 0.0)
                cloud = add_noise(cloud, {.sigma = sigma,
                                          .seed = Rng::derive(seed, 7000 + 1000 * shape_idx + ni)});
            char buf[64];
            std::snprintf(buf, sizeof buf, "_s%g", sigma);
            cloud.name = tok + buf;
            shapes.push_back(std::move(cloud));
        }
        ++shape_idx;
    }
    if (shapes.empty()) throw UsageError("--synthetic: no shapes given");
    return shapes;
}

PointCloud load_cloud(const std::string& xyz_path, std::string normals_path,
                      std::string pidx_path, bool need_normals) {
    auto cloud = load_xyz(xyz_path);
    if (normals_path.empty()) {
        auto guess = with_extension(xyz_path, ".normals");
        if (fs::exists(guess)) normals_path = guess;
    }
    if (!normals_path.empty()) load_normals(normals_path, cloud);
    if (need_normals && !cloud.has_normals())
        throw UsageError(xyz_path + ": no ground-truth normals found (looked for " +
                         with_extension(xyz_path, ".normals") + ")");
    if (pidx_path.empty()) {
        auto guess = with_extension(xyz_path, ".pidx");
        if (fs::exists(guess)) pidx_path = guess;
    }
    if (!pidx_path.empty()) load_pidx(pidx_path, cloud);
    return cloud;
}

std::vector<PointCloud> load_split_clouds(const std::string& root, const std::string& split) {
    std::vector<PointCloud> clouds;
    for (const auto& name : load_split(split)) {
        fs::path base = fs::path(root) / name;
        clouds.push_back(load_cloud(base.string() + ".xyz", base.string() + ".normals",
                                    fs::exists(base.string() + ".pidx")
                                        ? base.string() + ".pidx"
                                        : "",
                                    true));
        clouds.back().name = name;
    }
    return clouds;
}

struct DataFlags {
    std::string synthetic;
    std::string noise_levels = "0";
    std::size_t n_points = 10000;
    std::string dataset_root;
    std::string split;
};

void add_data_flags(CLI::App* cmd, DataFlags& d) {
    cmd->add_option("--synthetic", d.synthetic,
                    "synthetic shape list, e.g. plane,sphere,dihedral:90");
    cmd->add_option("--noise-levels", d.noise_levels,
                    "noise sigmas (fraction of bbox diagonal) applied to each synthetic shape")
        ->capture_default_str();
    cmd->add_option("--n-points", d.n_points, "points per synthetic shape")
        ->capture_default_str();
    cmd->add_option("--dataset-root", d.dataset_root, "directory with <name>.xyz/.normals");
    cmd->add_option("--split", d.split, "split file listing shape names");
}

std::vector<PointCloud> resolve_shapes(const DataFlags& d, std::uint64_t seed) {
    if (!d.synthetic.empty())
        return build_synthetic(d.synthetic, parse_double_list(d.noise_levels, "--noise-levels"),
                               d.n_points, seed);
    if (!d.dataset_root.empty() || !d.split.empty()) {
        if (d.dataset_root.empty() || d.split.empty())
            throw UsageError("--dataset-root and --split must be given together");
        if (!fs::exists(d.split)) throw UsageError(d.split + ": no such split file");
        return load_split_clouds(d.dataset_root, d.split);
    }
    throw UsageError("no data source: give --synthetic or --dataset-root/--split");
}

struct ModelFlags {
    std::string profile = "full";
    std::string point_layers, qstn_point_layers, qstn_fc_layers, normal_head, plane_head;
    bool uniform_pool = false;
};

void add_model_flags(CLI::App* cmd, ModelFlags& m) {
    cmd->add_option("--profile", m.profile, "architecture preset: full or reduced")
        ->check(CLI::IsMember({"full", "reduced"}))
        ->capture_default_str();
    cmd->add_option("--point-layers", m.point_layers,
                    "per-point MLP widths, last entry is the feature width");
    cmd->add_option("--qstn-point-layers", m.qstn_point_layers, "pose regressor point widths");
    cmd->add_option("--qstn-fc-layers", m.qstn_fc_layers, "pose regressor head widths");
    cmd->add_option("--normal-head", m.normal_head, "normal head hidden widths");
    cmd->add_option("--plane-head", m.plane_head, "plane head hidden widths");
    cmd->add_flag("--uniform-pool", m.uniform_pool,
                  "plain mean pooling instead of learned weights");
}

ModelConfig resolve_model_config(const ModelFlags& m, std::size_t k) {
    ModelConfig cfg = m.profile == "reduced" ? ModelConfig::reduced() : ModelConfig::full();
    cfg.k = k;
    if (!m.point_layers.empty())
        cfg.point_layers = parse_size_list(m.point_layers, "--point-layers");
    if (!m.qstn_point_layers.empty())
        cfg.qstn_point_layers = parse_size_list(m.qstn_point_layers, "--qstn-point-layers");
    if (!m.qstn_fc_layers.empty())
        cfg.qstn_fc_layers = parse_size_list(m.qstn_fc_layers, "--qstn-fc-layers");
    if (!m.normal_head.empty()) cfg.normal_head = parse_size_list(m.normal_head, "--normal-head");
    if (!m.plane_head.empty()) cfg.plane_head = parse_size_list(m.plane_head, "--plane-head");
    cfg.uniform_pooling = m.uniform_pool;
    return cfg;
}

struct LabelFlags {
    double theta = 0.5;
    double theta_small = 0.8;
    double small_cutoff = 0.03;
};

void add_label_flags(CLI::App* cmd, LabelFlags& l) {
    cmd->add_option("--theta", l.theta, "plane threshold on the normalized error")
        ->check(CLI::Range(1e-9, 1.0))
        ->capture_default_str();
    cmd->add_option("--theta-small", l.theta_small, "threshold used at small scales")
        ->check(CLI::Range(1e-9, 1.0))
        ->capture_default_str();
    cmd->add_option("--small-cutoff", l.small_cutoff,
                    "radius at or below which --theta-small applies")
        ->capture_default_str();
}

LabelConfig resolve_labels(const LabelFlags& l) {
    LabelConfig cfg;
    cfg.theta = l.theta;
    cfg.theta_small = l.theta_small;
    cfg.small_scale_cutoff = l.small_cutoff;
    return cfg;
}

void write_heatmap_for_eval(const PointCloud& cloud, const ShapeEval& ev,
                            const std::string& path) {
    // unevaluated points stay grey; the rest get the 0..60 degree ramp
    std::vector<Rgb> colors(cloud.size(), Rgb{128, 128, 128});
    for (std::size_t i = 0; i < ev.point_indices.size(); ++i)
        colors[ev.point_indices[i]] = heatmap_color(ev.angles[i]);
    write_ply(cloud.points, colors, path);
}

// ---- subcommands -----------------------------------------------------------

int run_gen(const std::string& shape, double angle, std::size_t n, double noise,
            const std::string& density, double p_low, double p_high, int density_axis,
            int stripes, double duty, std::size_t pidx, std::uint64_t seed,
            const std::string& out) {
    ShapeParams params;
    params.dihedral_angle_deg = angle;
    auto cloud = gen_shape(shape, params, n, seed);
    if (noise > 0.0) cloud = add_noise(cloud, {.sigma = noise, .seed = Rng::derive(seed, 1)});
    if (density != "none") {
        DensityPattern p;
        p.kind = density == "stripes" ? DensityPattern::Kind::stripes
                                      : DensityPattern::Kind::gradient;
        p.p_low = p_low;
        p.p_high = p_high;
        p.axis = density_axis;
        p.stripe_count = stripes;
        p.stripe_duty = duty;
        p.seed = Rng::derive(seed, 2);
        cloud = apply_density(cloud, p);
    }
    if (pidx > 0) {
        Rng rng(Rng::derive(seed, 3));
        cloud.eval_indices = rng.sample_without_replacement(cloud.size(),
                                                            std::min(pidx, cloud.size()));
        std::sort(cloud.eval_indices.begin(), cloud.eval_indices.end());
    }
    std::string xyz = with_extension(out, ".xyz");
    save_xyz(cloud, xyz);
    save_normals(cloud, with_extension(out, ".normals"));
    if (pidx > 0) save_pidx(cloud, with_extension(out, ".pidx"));
    std::printf("wrote %s (%zu points)\n", xyz.c_str(), cloud.size());
    return 0;
}

int run_labels(const std::string& cloud_path, double radius, const LabelFlags& lflags,
               std::size_t k, std::vector<std::size_t> centers, std::size_t random_centers,
               std::uint64_t seed, const std::string& out, bool quiet) {
    auto cloud = load_cloud(cloud_path, "", "", true);
    KdTree tree(cloud.points);
    LabelConfig lcfg = resolve_labels(lflags);
    if (centers.empty()) {
        Rng rng(Rng::derive(seed, 11));
        centers = rng.sample_without_replacement(cloud.size(), random_centers);
    }
    for (std::size_t c : centers) {
        if (c >= cloud.size()) throw UsageError("--center " + std::to_string(c) + " out of range");
        auto patch = extract_patch(cloud, tree, c, radius, k, Rng::derive(seed, c));
        compute_labels(patch, lcfg);
        std::size_t plane = 0;
        for (auto l : patch.plane_labels) plane += l;
        if (!quiet)
            std::printf("center %zu: %zu plane / %zu error points (theta_eff=%g)\n", c, plane,
                        patch.size() - plane, effective_theta(lcfg, radius));
        if (!out.empty()) {
            std::vector<Vec3> world;
            for (std::size_t idx : patch.source_indices) world.push_back(cloud.points[idx]);
            auto path = with_extension(out, "") + "_c" + std::to_string(c) + ".ply";
            write_ply_labels(world, patch.plane_labels, path);
            if (!quiet) std::printf("  wrote %s\n", path.c_str());
        }
    }
    return 0;
}

int run_train_single(const DataFlags& data, const ModelFlags& mflags, const LabelFlags& lflags,
                     double radius, std::size_t k, std::size_t epochs, std::size_t batch,
                     double lr, double momentum, std::size_t patches_per_shape,
                     std::uint64_t seed, std::size_t checkpoint_every, const std::string& out,
                     const std::string& history_path) {
    TrainConfig cfg;
    cfg.radii = {radius};
    cfg.k = k;
    cfg.epochs = epochs;
    cfg.batch_size_single = batch;
    cfg.learning_rate = lr;
    cfg.momentum = momentum;
    cfg.patches_per_shape = patches_per_shape;
    cfg.seed = seed;
    cfg.labels = resolve_labels(lflags);

    auto shapes = resolve_shapes(data, seed);
    std::printf("building dataset: %zu shapes x up to %zu patches\n", shapes.size(),
                patches_per_shape);
    auto dataset = build_dataset(shapes, cfg);
    std::printf("dataset ready: %zu patches\n", dataset.size());

    SingleScaleModel model;
    model.cfg = resolve_model_config(mflags, k);
    model.init(seed);

    auto save = [&](const std::string& path) {
        save_single_model(path, model);
        // record the training radius so eval can default to it
        auto ck = load_checkpoint(path);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", radius);
        ck.meta["radius"] = buf;
        save_checkpoint(path, ck);
    };
    auto history = train_single(dataset, model, cfg, 0,
                                [&](std::size_t epoch, const EpochStats& st) {
                                    std::printf("epoch %zu: normal=%.6f plane=%.6f total=%.6f\n",
                                                epoch + 1, st.l_normal, st.l_main, st.l_total);
                                    std::fflush(stdout);
                                    if (checkpoint_every > 0 && (epoch + 1) % checkpoint_every == 0)
                                        save(with_extension(out, "") + ".epoch" +
                                             std::to_string(epoch + 1) + ".ckpt");
                                });
    save(out);
    if (!history_path.empty()) write_history_csv(history_path, history);
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int run_train_multi(const DataFlags& data, const ModelFlags& mflags, const LabelFlags& lflags,
                    std::vector<double> radii, const std::string& preset, std::size_t k,
                    std::size_t epochs, std::size_t batch, double lr, double momentum,
                    std::size_t patches_per_shape, std::uint64_t seed,
                    const std::string& init_checkpoints, bool freeze, const std::string& out,
                    const std::string& history_path) {
    if (preset == "multi2") radii = {0.03, 0.05, 0.07};
    TrainConfig cfg;
    cfg.radii = radii;
    cfg.k = k;
    cfg.epochs = epochs;
    cfg.batch_size_multi = batch;
    cfg.learning_rate = lr;
    cfg.momentum = momentum;
    cfg.patches_per_shape = patches_per_shape;
    cfg.seed = seed;
    cfg.labels = resolve_labels(lflags);
    cfg.freeze_subnets = freeze;

    auto shapes = resolve_shapes(data, seed);
    auto dataset = build_dataset(shapes, cfg);
    std::printf("dataset ready: %zu patch tuples at %zu scales\n", dataset.size(), radii.size());

    MultiScaleModel model;
    model.subnets.assign(radii.size(), SingleScaleModel{});
    for (auto& s : model.subnets) s.cfg = resolve_model_config(mflags, k);
    model.radii = radii;
    model.init(seed);
    if (!init_checkpoints.empty()) {
        std::istringstream in(init_checkpoints);
        std::string path;
        std::size_t s = 0;
        while (std::getline(in, path, ',')) {
            if (s >= model.subnets.size())
                throw UsageError("--init-checkpoints: more checkpoints than scales");
            if (!fs::exists(path)) throw UsageError(path + ": no such checkpoint");
            model.subnets[s] = load_single_model(path);
            if (model.subnets[s].cfg.k != k)
                throw UsageError(path + ": checkpoint patch size does not match --k");
            ++s;
        }
        if (s != model.subnets.size())
            throw UsageError("--init-checkpoints: need one checkpoint per scale");
    }

    auto history = train_multi(dataset, model, cfg,
                               [&](std::size_t epoch, const EpochStats& st) {
                                   std::printf("epoch %zu: normal=%.6f plane=%.6f total=%.6f\n",
                                               epoch + 1, st.l_normal, st.l_main, st.l_total);
                                   std::fflush(stdout);
                               });
    save_multi_model(out, model);
    if (!history_path.empty()) write_history_csv(history_path, history);
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int run_eval(const std::string& estimator, double radius, const std::string& checkpoint,
             const DataFlags& data, const std::string& cloud_path, const std::string& category,
             int workers, std::uint64_t seed, const std::string& report_csv,
             const std::string& report_txt, const std::string& heatmap,
             const std::string& dump_normals) {
    std::vector<PointCloud> clouds;
    if (!cloud_path.empty())
        clouds.push_back(load_cloud(cloud_path, "", "", true));
    else
        clouds = resolve_shapes(data, seed);

    SingleScaleModel single;
    MultiScaleModel multi;
    std::unique_ptr<NormalEstimator> est;
    if (estimator == "pca") {
        if (radius <= 0.0) throw UsageError("--radius is required for pca");
        est = std::make_unique<PcaEstimator>(radius, workers);
    } else if (estimator == "jet") {
        if (radius <= 0.0) throw UsageError("--radius is required for jet");
        est = std::make_unique<JetEstimator>(radius, workers);
    } else if (estimator == "single") {
        if (checkpoint.empty()) throw UsageError("--checkpoint is required for single");
        single = load_single_model(checkpoint);
        if (radius <= 0.0) {
            auto meta = load_checkpoint(checkpoint).meta;
            auto it = meta.find("radius");
            if (it == meta.end())
                throw UsageError("checkpoint has no stored radius; pass --radius");
            radius = std::stod(it->second);
        }
        est = std::make_unique<SingleModelEstimator>(single, radius, seed);
    } else if (estimator == "multi") {
        if (checkpoint.empty()) throw UsageError("--checkpoint is required for multi");
        multi = load_multi_model(checkpoint);
        est = std::make_unique<MultiModelEstimator>(multi, seed);
    } else {
        throw UsageError("unknown estimator '" + estimator + "'");
    }

    EvalReport report;
    for (const auto& cloud : clouds) {
        auto ev = evaluate_shape(cloud, *est);
        std::printf("%-30s rmse=%.4f deg (%zu points, %zu excluded)\n", cloud.name.c_str(),
                    ev.rmse, ev.evaluated, ev.excluded);
        if (!heatmap.empty())
            write_heatmap_for_eval(cloud, ev,
                                   with_extension(heatmap, "") + "_" + cloud.name + ".ply");
        if (!dump_normals.empty()) {
            auto est_one = est->estimate(cloud, KdTree(cloud.points), ev.point_indices);
            PointCloud dump;
            dump.points.assign(cloud.size(), Vec3{0, 0, 0});
            for (std::size_t i = 0; i < ev.point_indices.size(); ++i)
                dump.points[ev.point_indices[i]] = est_one[i].normal;
            save_xyz(dump, with_extension(dump_normals, "") + "_" + cloud.name + ".normals");
        }
        report.add(category, std::move(ev));
    }
    std::printf("%s", report.to_text().c_str());
    if (!report_csv.empty()) report.write_csv(report_csv);
    if (!report_txt.empty()) {
        std::ofstream out(report_txt);
        out << report.to_text();
    }
    return 0;
}

int run_baseline_sweep(const std::string& estimator, const std::string& radii_spec,
                       const DataFlags& data, const std::string& cloud_path, int workers,
                       std::uint64_t seed, const std::string& out_csv) {
    auto radii = parse_double_list(radii_spec, "--radii");
    std::vector<PointCloud> clouds;
    if (!cloud_path.empty())
        clouds.push_back(load_cloud(cloud_path, "", "", true));
    else
        clouds = resolve_shapes(data, seed);

    std::vector<std::string> estimators;
    if (estimator == "both") {
        estimators = {"pca", "jet"};
    } else {
        estimators = {estimator};
    }
    std::ofstream csv;
    if (!out_csv.empty()) {
        csv.open(out_csv);
        csv << "estimator,radius,shape,rmse_deg,evaluated,excluded\n";
    }
    for (const auto& name : estimators) {
        double best_rmse = 0.0, best_radius = 0.0;
        bool first = true;
        for (double r : radii) {
            std::unique_ptr<NormalEstimator> est;
            if (name == "pca")
                est = std::make_unique<PcaEstimator>(r, workers);
            else
                est = std::make_unique<JetEstimator>(r, workers);
            double acc = 0.0;
            for (const auto& cloud : clouds) {
                auto ev = evaluate_shape(cloud, *est);
                acc += ev.rmse;
                std::printf("%s r=%.4g %-28s rmse=%.4f\n", name.c_str(), r, cloud.name.c_str(),
                            ev.rmse);
                if (csv.is_open())
                    csv << name << "," << r << "," << cloud.name << "," << ev.rmse << ","
                        << ev.evaluated << "," << ev.excluded << "\n";
            }
            double mean = acc / static_cast<double>(clouds.size());
            std::printf("%s r=%.4g average rmse=%.4f\n", name.c_str(), r, mean);
            if (first || mean < best_rmse) {
                best_rmse = mean;
                best_radius = r;
                first = false;
            }
        }
        std::printf("%s best radius %.4g with average rmse %.4f\n", name.c_str(), best_radius,
                    best_rmse);
    }
    return 0;
}

int run_export_heatmap(const std::string& cloud_path, const std::string& est_path,
                       const std::string& out) {
    auto cloud = load_cloud(cloud_path, "", "", true);
    auto est = load_xyz(est_path);  // same row layout as .normals
    if (est.size() != cloud.size())
        throw UsageError(est_path + ": " + std::to_string(est.size()) + " rows for " +
                         std::to_string(cloud.size()) + " points");
    std::vector<Rgb> colors(cloud.size(), Rgb{128, 128, 128});
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (norm3(est.points[i]) == 0.0) continue;  // missing estimate stays grey
        colors[i] = heatmap_color(unoriented_angle_deg(cloud.normals[i], est.points[i]));
    }
    write_ply(cloud.points, colors, out);
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"point-cloud normal estimation: plane-aware patch networks, multi-scale "
                 "selection, classical baselines"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic shape with analytic normals");
    std::string g_shape = "sphere", g_density = "none", g_out;
    double g_angle = 90.0, g_noise = 0.0, g_plow = 0.1, g_phigh = 1.0, g_duty = 0.5;
    std::size_t g_n = 10000, g_pidx = 0;
    int g_axis = 0, g_stripes = 6;
    std::uint64_t g_seed = 0;
    gen->add_option("--shape", g_shape, "plane|sphere|cylinder|cube|dihedral")
        ->check(CLI::IsMember({"plane", "sphere", "cylinder", "cube", "dihedral"}))
        ->capture_default_str();
    gen->add_option("--angle", g_angle, "dihedral interior angle in degrees")
        ->capture_default_str();
    gen->add_option("--n", g_n, "number of points")->capture_default_str();
    gen->add_option("--noise", g_noise, "gaussian sigma as a fraction of the bbox diagonal")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    gen->add_option("--density", g_density, "none|stripes|gradient")
        ->check(CLI::IsMember({"none", "stripes", "gradient"}))
        ->capture_default_str();
    gen->add_option("--p-low", g_plow, "keep probability at the sparse end/slabs")
        ->capture_default_str();
    gen->add_option("--p-high", g_phigh, "keep probability at the dense end")
        ->capture_default_str();
    gen->add_option("--density-axis", g_axis, "axis the density pattern runs along")
        ->capture_default_str();
    gen->add_option("--stripes", g_stripes, "slab count for the striped pattern")
        ->capture_default_str();
    gen->add_option("--duty", g_duty, "fraction of each period that is sparse")
        ->capture_default_str();
    gen->add_option("--pidx", g_pidx, "also write this many random eval indices")
        ->capture_default_str();
    gen->add_option("--seed", g_seed, "rng seed")->capture_default_str();
    gen->add_option("--out", g_out, "output stem or .xyz path")->required();

    // labels / export-labels
    auto add_labels_cmd = [&](const char* name, const char* desc, bool exporting) {
        auto* cmd = app.add_subcommand(name, desc);
        auto state = std::make_shared<std::tuple<std::string, double, LabelFlags, std::size_t,
                                                 std::vector<std::size_t>, std::size_t,
                                                 std::uint64_t, std::string>>();
        auto& [cloud, radius, lflags, k, centers, rand_centers, seed, out] = *state;
        radius = 0.05;
        k = 500;
        rand_centers = 8;
        seed = 0;
        cmd->add_option("--cloud", cloud, "input .xyz with .normals alongside")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--radius", radius, "patch radius (fraction of bbox diagonal)")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        add_label_flags(cmd, lflags);
        cmd->add_option("--k", k, "points per patch")->capture_default_str();
        cmd->add_option("--center", centers, "patch center indices (repeatable)");
        cmd->add_option("--centers", rand_centers, "number of random centers when none given")
            ->capture_default_str();
        cmd->add_option("--seed", seed, "rng seed")->capture_default_str();
        auto* out_opt = cmd->add_option("--out", out, "output PLY stem (one file per center)");
        if (exporting) out_opt->required();
        cmd->callback([state, exporting] {
            const auto& [cloud, radius, lflags, k, centers, rand_centers, seed, out] = *state;
            run_labels(cloud, radius, lflags, k, centers, rand_centers, seed, out, exporting);
        });
        return cmd;
    };
    add_labels_cmd("labels", "inspect plane/error labels around chosen centers", false);
    add_labels_cmd("export-labels", "write label PLYs for chosen centers", true);

    // train-single
    auto* ts = app.add_subcommand("train-single", "train one fixed-scale network");
    DataFlags ts_data;
    ModelFlags ts_model;
    LabelFlags ts_labels;
    double ts_radius = 0.05, ts_lr = 1e-4, ts_momentum = 0.9;
    std::size_t ts_k = 500, ts_epochs = 20, ts_batch = 64, ts_pps = 500, ts_ckpt_every = 0;
    std::uint64_t ts_seed = 0;
    std::string ts_out = "single.ckpt", ts_history;
    add_data_flags(ts, ts_data);
    add_model_flags(ts, ts_model);
    add_label_flags(ts, ts_labels);
    ts->add_option("--radius", ts_radius, "patch radius (fraction of bbox diagonal)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    ts->add_option("--k", ts_k, "points per patch")->capture_default_str();
    ts->add_option("--epochs", ts_epochs, "training epochs")->capture_default_str();
    ts->add_option("--batch", ts_batch, "batch size")->capture_default_str();
    ts->add_option("--lr", ts_lr, "learning rate")->check(CLI::PositiveNumber)
        ->capture_default_str();
    ts->add_option("--momentum", ts_momentum, "sgd momentum")->check(CLI::Range(0.0, 0.999999))
        ->capture_default_str();
    ts->add_option("--patches-per-shape", ts_pps, "patch centers sampled per shape")
        ->capture_default_str();
    ts->add_option("--seed", ts_seed, "rng seed")->capture_default_str();
    ts->add_option("--checkpoint-every", ts_ckpt_every, "save every N epochs (0 = only at end)")
        ->capture_default_str();
    ts->add_option("--out", ts_out, "output checkpoint")->capture_default_str();
    ts->add_option("--history", ts_history, "loss history CSV");
    ts->set_config("--config");
    ts->callback([&] {
        run_train_single(ts_data, ts_model, ts_labels, ts_radius, ts_k, ts_epochs, ts_batch,
                         ts_lr, ts_momentum, ts_pps, ts_seed, ts_ckpt_every, ts_out, ts_history);
    });

    // train-multi
    auto* tm = app.add_subcommand("train-multi", "train the multi-scale selection network");
    DataFlags tm_data;
    ModelFlags tm_model;
    LabelFlags tm_labels;
    std::string tm_radii = "0.01,0.03,0.05", tm_preset = "none", tm_init, tm_out = "multi.ckpt",
                tm_history;
    double tm_lr = 1e-4, tm_momentum = 0.9;
    std::size_t tm_k = 500, tm_epochs = 20, tm_batch = 16, tm_pps = 500;
    std::uint64_t tm_seed = 0;
    bool tm_freeze = false;
    add_data_flags(tm, tm_data);
    add_model_flags(tm, tm_model);
    add_label_flags(tm, tm_labels);
    tm->add_option("--radii", tm_radii, "scale radii, small to large")->capture_default_str();
    tm->add_option("--radii-preset", tm_preset, "none|multi2 (multi2 = 0.03,0.05,0.07)")
        ->check(CLI::IsMember({"none", "multi2"}))
        ->capture_default_str();
    tm->add_option("--k", tm_k, "points per patch")->capture_default_str();
    tm->add_option("--epochs", tm_epochs, "training epochs")->capture_default_str();
    tm->add_option("--batch", tm_batch, "batch size")->capture_default_str();
    tm->add_option("--lr", tm_lr, "learning rate")->check(CLI::PositiveNumber)
        ->capture_default_str();
    tm->add_option("--momentum", tm_momentum, "sgd momentum")->check(CLI::Range(0.0, 0.999999))
        ->capture_default_str();
    tm->add_option("--patches-per-shape", tm_pps, "patch centers sampled per shape")
        ->capture_default_str();
    tm->add_option("--seed", tm_seed, "rng seed")->capture_default_str();
    tm->add_option("--init-checkpoints", tm_init,
                   "comma list of single-scale checkpoints, one per scale");
    tm->add_flag("--freeze-subnets", tm_freeze, "train only the scale estimation network");
    tm->add_option("--out", tm_out, "output checkpoint")->capture_default_str();
    tm->add_option("--history", tm_history, "loss history CSV");
    tm->set_config("--config");
    tm->callback([&] {
        run_train_multi(tm_data, tm_model, tm_labels, parse_double_list(tm_radii, "--radii"),
                        tm_preset, tm_k, tm_epochs, tm_batch, tm_lr, tm_momentum, tm_pps, tm_seed,
                        tm_init, tm_freeze, tm_out, tm_history);
    });

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate an estimator against ground truth");
    DataFlags ev_data;
    std::string ev_estimator = "pca", ev_ckpt, ev_cloud, ev_category, ev_csv, ev_txt, ev_heatmap,
                ev_dump;
    double ev_radius = 0.0;
    int ev_workers = 1;
    std::uint64_t ev_seed = 0;
    add_data_flags(ev, ev_data);
    ev->add_option("--estimator", ev_estimator, "pca|jet|single|multi")
        ->check(CLI::IsMember({"pca", "jet", "single", "multi"}))
        ->capture_default_str();
    ev->add_option("--radius", ev_radius, "neighborhood radius for pca/jet/single");
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint for single/multi")
        ->check(CLI::ExistingFile);
    ev->add_option("--cloud", ev_cloud, "evaluate a single .xyz instead of a data source")
        ->check(CLI::ExistingFile);
    ev->add_option("--category", ev_category, "category label for the report");
    ev->add_option("--workers", ev_workers, "worker threads for pca/jet")->capture_default_str();
    ev->add_option("--seed", ev_seed, "rng seed for patch resampling")->capture_default_str();
    ev->add_option("--report-csv", ev_csv, "write per-shape CSV");
    ev->add_option("--report-txt", ev_txt, "write the text table");
    ev->add_option("--heatmap", ev_heatmap, "write per-shape angle heatmap PLYs (stem)");
    ev->add_option("--dump-normals", ev_dump, "write estimated normals per shape (stem)");
    ev->callback([&] {
        run_eval(ev_estimator, ev_radius, ev_ckpt, ev_data, ev_cloud, ev_category, ev_workers,
                 ev_seed, ev_csv, ev_txt, ev_heatmap, ev_dump);
    });

    // baseline-sweep
    auto* bs = app.add_subcommand("baseline-sweep",
                                  "sweep classical estimators over a radius list");
    DataFlags bs_data;
    std::string bs_estimator = "both", bs_radii = "0.01,0.02,0.03,0.05,0.07,0.1", bs_cloud,
                bs_csv;
    int bs_workers = 1;
    std::uint64_t bs_seed = 0;
    add_data_flags(bs, bs_data);
    bs->add_option("--estimator", bs_estimator, "pca|jet|both")
        ->check(CLI::IsMember({"pca", "jet", "both"}))
        ->capture_default_str();
    bs->add_option("--radii", bs_radii, "radii to sweep")->capture_default_str();
    bs->add_option("--cloud", bs_cloud, "sweep a single .xyz")->check(CLI::ExistingFile);
    bs->add_option("--workers", bs_workers, "worker threads")->capture_default_str();
    bs->add_option("--seed", bs_seed, "rng seed")->capture_default_str();
    bs->add_option("--out-csv", bs_csv, "write sweep results as CSV");
    bs->callback([&] {
        run_baseline_sweep(bs_estimator, bs_radii, bs_data, bs_cloud, bs_workers, bs_seed,
                           bs_csv);
    });

    // export-heatmap
    auto* eh = app.add_subcommand("export-heatmap",
                                  "color a cloud by angle between stored and estimated normals");
    std::string eh_cloud, eh_est, eh_out;
    eh->add_option("--cloud", eh_cloud, "input .xyz with .normals alongside")
        ->required()
        ->check(CLI::ExistingFile);
    eh->add_option("--est", eh_est, "estimated normals file (same row count)")
        ->required()
        ->check(CLI::ExistingFile);
    eh->add_option("--out", eh_out, "output PLY")->required();
    eh->callback([&] { run_export_heatmap(eh_cloud, eh_est, eh_out); });

    gen->callback([&] {
        run_gen(g_shape, g_angle, g_n, g_noise, g_density, g_plow, g_phigh, g_axis, g_stripes,
                g_duty, g_pidx, g_seed, g_out);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
            return app.exit(e);
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
