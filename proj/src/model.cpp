#include "pcn/model.hpp"

#include <cmath>
#include <sstream>

#include "pcn/rng.hpp"

namespace pcn {

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
    std::vector<std::size_t> out;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stoul(tok));
    }
    return out;
}

Dense make_dense(std::size_t in, std::size_t out, Rng& rng, double weight_scale = 1.0) {
    double bound = weight_scale / std::sqrt(static_cast<double>(in));
    std::vector<double> w(in * out);
    for (auto& x : w) x = rng.uniform(-bound, bound);
    Dense d;
    d.W = tensor({in, out}, std::move(w), true);
    d.b = zeros({out}, true);
    return d;
}

TensorPtr apply_dense(const TensorPtr& x, const Dense& d) {
    return add(matmul(x, d.W), d.b);
}

// shared per-point layers: [B,K,C] -> [B,K,out], relu after every layer
TensorPtr per_point_mlp(const TensorPtr& coords, const std::vector<Dense>& layers) {
    std::size_t b = coords->shape[0], k = coords->shape[1];
    TensorPtr h = reshape(coords, {b * k, coords->shape[2]});
    for (const auto& layer : layers) h = relu(apply_dense(h, layer));
    return reshape(h, {b, k, h->shape.back()});
}

void check_finite(const TensorPtr& t, const char* stage) {
    for (double v : t->values)
        if (!std::isfinite(v))
            throw Error(std::string("single_forward: non-finite values in ") + stage);
}

void collect(std::vector<std::pair<std::string, TensorPtr>>& out, const std::string& prefix,
             const std::vector<Dense>& layers, const std::string& name) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        out.emplace_back(prefix + name + std::to_string(i) + ".W", layers[i].W);
        out.emplace_back(prefix + name + std::to_string(i) + ".b", layers[i].b);
    }
}

void collect(std::vector<std::pair<std::string, TensorPtr>>& out, const std::string& prefix,
             const Dense& layer, const std::string& name) {
    out.emplace_back(prefix + name + ".W", layer.W);
    out.emplace_back(prefix + name + ".b", layer.b);
}

}  // namespace

ModelConfig ModelConfig::full() { return ModelConfig{}; }

ModelConfig ModelConfig::reduced() {
    ModelConfig c;
    c.k = 64;
    c.qstn_point_layers = {16, 32};
    c.qstn_fc_layers = {16};
    c.point_layers = {64, 128};
    c.normal_head = {64, 32};
    c.plane_head = {32};
    return c;
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_kv() const {
    return {{"k", std::to_string(k)},
            {"qstn_point_layers", join_sizes(qstn_point_layers)},
            {"qstn_fc_layers", join_sizes(qstn_fc_layers)},
            {"point_layers", join_sizes(point_layers)},
            {"normal_head", join_sizes(normal_head)},
            {"plane_head", join_sizes(plane_head)},
            {"uniform_pooling", uniform_pooling ? "1" : "0"}};
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
    ModelConfig c;
    auto get = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw Error(std::string("ModelConfig: missing key ") + key);
        return it->second;
    };
    c.k = std::stoul(get("k"));
    c.qstn_point_layers = parse_sizes(get("qstn_point_layers"));
    c.qstn_fc_layers = parse_sizes(get("qstn_fc_layers"));
    c.point_layers = parse_sizes(get("point_layers"));
    c.normal_head = parse_sizes(get("normal_head"));
    c.plane_head = parse_sizes(get("plane_head"));
    c.uniform_pooling = get("uniform_pooling") == "1";
    return c;
}

void SingleScaleModel::init(std::uint64_t seed) {
    if (cfg.point_layers.empty()) throw Error("SingleScaleModel: empty point MLP");
    Rng rng(seed);
    qstn_point.clear();
    qstn_fc.clear();
    point_mlp.clear();
    normal_hidden.clear();
    plane_hidden.clear();

    std::size_t in = 3;
    for (std::size_t w : cfg.qstn_point_layers) {
        qstn_point.push_back(make_dense(in, w, rng));
        in = w;
    }
    for (std::size_t w : cfg.qstn_fc_layers) {
        qstn_fc.push_back(make_dense(in, w, rng));
        in = w;
    }
    // near-zero weights plus an identity-quaternion bias: training starts
    // from an (almost) unrotated frame while gradients still flow
    qstn_out = make_dense(in, 4, rng, 1e-3);
    qstn_out.b->values = {1.0, 0.0, 0.0, 0.0};

    in = 3;
    for (std::size_t w : cfg.point_layers) {
        point_mlp.push_back(make_dense(in, w, rng));
        in = w;
    }
    std::size_t f = cfg.feature_width();
    pool_weight = make_dense(f, 1, rng);

    in = f;
    for (std::size_t w : cfg.normal_head) {
        normal_hidden.push_back(make_dense(in, w, rng));
        in = w;
    }
    normal_out = make_dense(in, 3, rng);

    in = 2 * f;
    for (std::size_t w : cfg.plane_head) {
        plane_hidden.push_back(make_dense(in, w, rng));
        in = w;
    }
    plane_out = make_dense(in, 1, rng);
}

std::vector<std::pair<std::string, TensorPtr>> SingleScaleModel::named_params(
    const std::string& prefix) {
    std::vector<std::pair<std::string, TensorPtr>> out;
    collect(out, prefix, qstn_point, "qstn.pt");
    collect(out, prefix, qstn_fc, "qstn.fc");
    collect(out, prefix, qstn_out, "qstn.out");
    collect(out, prefix, point_mlp, "mlp");
    collect(out, prefix, pool_weight, "pool");
    collect(out, prefix, normal_hidden, "nhead");
    collect(out, prefix, normal_out, "nout");
    collect(out, prefix, plane_hidden, "phead");
    collect(out, prefix, plane_out, "pout");
    return out;
}

std::vector<TensorPtr> SingleScaleModel::params() {
    std::vector<TensorPtr> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
}

void SingleScaleModel::set_requires_grad(bool on) {
    for (auto& p : params()) p->requires_grad = on;
}

TensorPtr quat_to_rot(const TensorPtr& q_raw) {
    if (q_raw->shape.size() != 2 || q_raw->shape[1] != 4)
        throw Error("quat_to_rot: expected [B,4], got " + shape_str(q_raw->shape));
    std::size_t batch = q_raw->shape[0];
    for (std::size_t r = 0; r < batch; ++r) {
        double n = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            double v = q_raw->values[r * 4 + j];
            n += v * v;
        }
        if (std::sqrt(n) < 1e-12)
            throw Error("quat_to_rot: zero-length quaternion in row " + std::to_string(r));
    }
    auto q = l2_normalize_last(q_raw);
    auto w = slice_last(q, 0, 1);
    auto x = slice_last(q, 1, 1);
    auto y = slice_last(q, 2, 1);
    auto z = slice_last(q, 3, 1);
    auto one = scalar(1.0);
    auto two = [](const TensorPtr& t) { return scale(t, 2.0); };

    auto r00 = sub(one, two(add(mul(y, y), mul(z, z))));
    auto r01 = two(sub(mul(x, y), mul(w, z)));
    auto r02 = two(add(mul(x, z), mul(w, y)));
    auto r10 = two(add(mul(x, y), mul(w, z)));
    auto r11 = sub(one, two(add(mul(x, x), mul(z, z))));
    auto r12 = two(sub(mul(y, z), mul(w, x)));
    auto r20 = two(sub(mul(x, z), mul(w, y)));
    auto r21 = two(add(mul(y, z), mul(w, x)));
    auto r22 = sub(one, two(add(mul(x, x), mul(y, y))));
    auto flat = concat_last({r00, r01, r02, r10, r11, r12, r20, r21, r22});
    return reshape(flat, {batch, 3, 3});
}

ForwardResult single_forward(const SingleScaleModel& model, const TensorPtr& coords) {
    if (coords->shape.size() != 3 || coords->shape[2] != 3)
        throw Error("single_forward: expected [B,K,3], got " + shape_str(coords->shape));
    std::size_t b = coords->shape[0], k = coords->shape[1];

    // canonical pose from the quaternion regressor
    TensorPtr qh = per_point_mlp(coords, model.qstn_point);
    TensorPtr qg = mean_axis(qh, 1);
    for (const auto& layer : model.qstn_fc) qg = relu(apply_dense(qg, layer));
    TensorPtr q_raw = apply_dense(qg, model.qstn_out);
    check_finite(q_raw, "qstn");
    TensorPtr rot = quat_to_rot(q_raw);
    TensorPtr rotated = rotate_vec3(rot, coords);

    TensorPtr feats = per_point_mlp(rotated, model.point_mlp);
    check_finite(feats, "point_mlp");
    std::size_t f = feats->shape[2];

    TensorPtr weights, global;
    if (model.cfg.uniform_pooling) {
        weights = full({b, k}, 1.0 / static_cast<double>(k));
        global = mean_axis(feats, 1);
    } else {
        TensorPtr logits = apply_dense(reshape(feats, {b * k, f}), model.pool_weight);
        weights = softmax_last(reshape(logits, {b, k}));
        global = weighted_mean_axis(feats, weights, 1);
    }
    check_finite(global, "global_feature");

    TensorPtr nh = global;
    for (const auto& layer : model.normal_hidden) nh = relu(apply_dense(nh, layer));
    TensorPtr n_canonical = l2_normalize_last(apply_dense(nh, model.normal_out));
    // predictions live in the input frame, like the ground truth
    TensorPtr normal = rotate_vec3(rot, n_canonical, /*transpose=*/true);
    check_finite(normal, "normal_head");

    TensorPtr expanded = expand_axis(global, 1, k);
    TensorPtr ph = reshape(concat_last({feats, expanded}), {b * k, 2 * f});
    for (const auto& layer : model.plane_hidden) ph = relu(apply_dense(ph, layer));
    TensorPtr plane_logits = apply_dense(ph, model.plane_out);
    check_finite(plane_logits, "plane_head");
    TensorPtr probs = sigmoid(reshape(plane_logits, {b, k}));

    ForwardResult res;
    res.normal = normal;
    res.plane_probs = probs;
    res.quaternion = l2_normalize_last(q_raw);
    res.rotation = rot;
    res.global_feature = global;
    res.pool_weights = weights;
    return res;
}

void MultiScaleModel::init(std::uint64_t seed) {
    if (subnets.empty()) throw Error("MultiScaleModel: no subnets");
    if (subnets.size() != radii.size())
        throw Error("MultiScaleModel: radii count does not match subnets");
    for (std::size_t s = 1; s < radii.size(); ++s)
        if (radii[s] <= radii[s - 1]) throw Error("MultiScaleModel: radii must increase");
    for (std::size_t s = 0; s < subnets.size(); ++s)
        subnets[s].init(seed + s);
    Rng rng(Rng::derive(seed, 0x5CA1E));
    std::size_t in = subnets.size() * subnets[0].cfg.feature_width();
    scale_hidden.clear();
    for (std::size_t w : scale_net_hidden) {
        scale_hidden.push_back(make_dense(in, w, rng));
        in = w;
    }
    scale_out = make_dense(in, subnets.size(), rng);
}

std::vector<std::pair<std::string, TensorPtr>> MultiScaleModel::named_params() {
    std::vector<std::pair<std::string, TensorPtr>> out;
    for (std::size_t s = 0; s < subnets.size(); ++s) {
        auto sub = subnets[s].named_params("s" + std::to_string(s) + ".");
        out.insert(out.end(), sub.begin(), sub.end());
    }
    collect(out, "", scale_hidden, "scalenet.h");
    collect(out, "", scale_out, "scalenet.out");
    return out;
}

std::vector<TensorPtr> MultiScaleModel::params() {
    std::vector<TensorPtr> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
}

std::vector<TensorPtr> MultiScaleModel::scale_net_params() {
    std::vector<TensorPtr> out;
    for (auto& d : scale_hidden) {
        out.push_back(d.W);
        out.push_back(d.b);
    }
    out.push_back(scale_out.W);
    out.push_back(scale_out.b);
    return out;
}

MultiForwardResult multi_forward(const MultiScaleModel& model,
                                 const std::vector<TensorPtr>& coords_per_scale) {
    std::size_t s_count = model.subnets.size();
    if (coords_per_scale.size() != s_count)
        throw Error("multi_forward: got " + std::to_string(coords_per_scale.size()) +
                    " patch sets for " + std::to_string(s_count) + " scales");
    MultiForwardResult res;
    std::vector<TensorPtr> globals;
    for (std::size_t s = 0; s < s_count; ++s) {
        res.per_scale.push_back(single_forward(model.subnets[s], coords_per_scale[s]));
        globals.push_back(res.per_scale.back().global_feature);
    }
    TensorPtr cat = concat_last(globals);
    TensorPtr h = cat;
    for (const auto& layer : model.scale_hidden) h = relu(apply_dense(h, layer));
    res.scale_weights = softmax_last(apply_dense(h, model.scale_out));

    std::size_t batch = coords_per_scale[0]->shape[0];
    res.selected.resize(batch);
    std::vector<double> normal_rows(batch * 3);
    for (std::size_t r = 0; r < batch; ++r) {
        std::size_t best = 0;
        for (std::size_t s = 1; s < s_count; ++s)
            if (res.scale_weights->values[r * s_count + s] >
                res.scale_weights->values[r * s_count + best])
                best = s;
        res.selected[r] = best;
        for (int a = 0; a < 3; ++a)
            normal_rows[r * 3 + a] = res.per_scale[best].normal->values[r * 3 + a];
    }
    res.normal = tensor({batch, 3}, std::move(normal_rows));
    return res;
}

TensorPtr per_patch_normal_loss(const TensorPtr& predicted, const TensorPtr& ground_truth) {
    if (predicted->shape != ground_truth->shape)
        throw Error("normal_loss: shapes " + shape_str(predicted->shape) + " and " +
                    shape_str(ground_truth->shape) + " differ");
    auto d1 = l2_norm_last(sub(ground_truth, predicted));
    auto d2 = l2_norm_last(add(ground_truth, predicted));
    return min_elem(d1, d2);
}

TensorPtr loss_normal(const TensorPtr& predicted, const TensorPtr& ground_truth) {
    return mean_axis(per_patch_normal_loss(predicted, ground_truth), 0);
}

TensorPtr loss_plane(const TensorPtr& probs, const TensorPtr& labels) {
    if (probs->shape != labels->shape)
        throw Error("plane_loss: shapes " + shape_str(probs->shape) + " and " +
                    shape_str(labels->shape) + " differ");
    auto one = scalar(1.0);
    auto p = clamp(probs, 1e-7, 1.0 - 1e-7);
    auto ll = add(mul(labels, log_op(p)), mul(sub(one, labels), log_op(sub(one, p))));
    TensorPtr m = ll;
    for (std::size_t axis = ll->shape.size(); axis > 0; --axis) m = mean_axis(m, axis - 1);
    return scale(m, -1.0);
}

TensorPtr loss_total(const TensorPtr& normal_loss, const TensorPtr& plane_loss) {
    return add(normal_loss, plane_loss);
}

MultiLoss loss_multi_parts(const std::vector<TensorPtr>& per_patch_normal_losses,
                           const std::vector<TensorPtr>& plane_losses,
                           const TensorPtr& scale_weights) {
    std::size_t s_count = per_patch_normal_losses.size();
    if (s_count == 0 || plane_losses.size() != s_count)
        throw Error("loss_multi: per-scale loss counts differ");
    if (scale_weights->shape.size() != 2 || scale_weights->shape[1] != s_count)
        throw Error("loss_multi: scale weights " + shape_str(scale_weights->shape) +
                    " do not match " + std::to_string(s_count) + " scales");
    std::size_t batch = scale_weights->shape[0];
    std::vector<TensorPtr> cols;
    for (const auto& l : per_patch_normal_losses) cols.push_back(reshape(l, {batch, 1}));
    TensorPtr ln = concat_last(cols);
    MultiLoss out;
    out.normal_term = mean_axis(sum_axis(mul(scale_weights, ln), 1), 0);
    TensorPtr plane = plane_losses[0];
    for (std::size_t s = 1; s < s_count; ++s) plane = add(plane, plane_losses[s]);
    out.plane_term = scale(plane, 1.0 / static_cast<double>(s_count));
    out.total = add(out.normal_term, out.plane_term);
    return out;
}

TensorPtr loss_multi(const std::vector<TensorPtr>& per_patch_normal_losses,
                     const std::vector<TensorPtr>& plane_losses, const TensorPtr& scale_weights) {
    return loss_multi_parts(per_patch_normal_losses, plane_losses, scale_weights).total;
}

TensorPtr patch_coords_tensor(const std::vector<const Patch*>& patches) {
    if (patches.empty()) throw Error("patch_coords_tensor: no patches");
    std::size_t k = patches[0]->size();
    std::vector<double> vals;
    vals.reserve(patches.size() * k * 3);
    for (const Patch* p : patches) {
        if (p->size() != k) throw Error("patch_coords_tensor: inconsistent patch sizes");
        for (const auto& c : p->coords) {
            vals.push_back(c[0]);
            vals.push_back(c[1]);
            vals.push_back(c[2]);
        }
    }
    return tensor({patches.size(), k, 3}, std::move(vals));
}

std::vector<NormalPrediction> predict_batch(const SingleScaleModel& model,
                                            const std::vector<const Patch*>& patches) {
    NoGradGuard ng;
    auto res = single_forward(model, patch_coords_tensor(patches));
    std::size_t k = patches[0]->size();
    std::vector<NormalPrediction> out(patches.size());
    for (std::size_t i = 0; i < patches.size(); ++i) {
        for (int a = 0; a < 3; ++a) out[i].normal[a] = res.normal->values[i * 3 + a];
        for (int a = 0; a < 4; ++a) out[i].quaternion[a] = res.quaternion->values[i * 4 + a];
        out[i].plane_probs.assign(res.plane_probs->values.begin() + i * k,
                                  res.plane_probs->values.begin() + (i + 1) * k);
    }
    return out;
}

NormalPrediction predict(const SingleScaleModel& model, const Patch& patch) {
    return predict_batch(model, {&patch})[0];
}

std::vector<NormalPrediction> predict_multi_batch(
    const MultiScaleModel& model, const std::vector<std::vector<const Patch*>>& per_scale) {
    NoGradGuard ng;
    std::vector<TensorPtr> coords;
    for (const auto& ps : per_scale) coords.push_back(patch_coords_tensor(ps));
    auto res = multi_forward(model, coords);
    std::size_t batch = per_scale[0].size();
    std::size_t s_count = model.subnets.size();
    std::vector<NormalPrediction> out(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        out[i].selected_scale = res.selected[i];
        for (int a = 0; a < 3; ++a) out[i].normal[a] = res.normal->values[i * 3 + a];
        out[i].scale_weights.assign(res.scale_weights->values.begin() + i * s_count,
                                    res.scale_weights->values.begin() + (i + 1) * s_count);
        const auto& sel = res.per_scale[res.selected[i]];
        std::size_t k = per_scale[res.selected[i]][i]->size();
        out[i].plane_probs.assign(sel.plane_probs->values.begin() + i * k,
                                  sel.plane_probs->values.begin() + (i + 1) * k);
        for (int a = 0; a < 4; ++a) out[i].quaternion[a] = sel.quaternion->values[i * 4 + a];
    }
    return out;
}

NormalPrediction predict_multi(const MultiScaleModel& model, const std::vector<Patch>& patches) {
    std::vector<std::vector<const Patch*>> per_scale;
    for (const auto& p : patches) per_scale.push_back({&p});
    return predict_multi_batch(model, per_scale)[0];
}

namespace {

void fill_from_checkpoint(const Checkpoint& ck,
                          std::vector<std::pair<std::string, TensorPtr>> named) {
    std::map<std::string, TensorPtr> stored;
    for (const auto& [name, t] : ck.tensors) stored[name] = t;
    for (auto& [name, t] : named) {
        auto it = stored.find(name);
        if (it == stored.end()) throw Error("checkpoint: missing tensor " + name);
        if (it->second->shape != t->shape)
            throw Error("checkpoint: tensor " + name + " has shape " +
                        shape_str(it->second->shape) + ", expected " + shape_str(t->shape));
        t->values = it->second->values;
    }
}

}  // namespace

void save_single_model(const std::string& path, SingleScaleModel& model) {
    Checkpoint ck;
    ck.meta["format"] = "single";
    for (const auto& [k, v] : model.cfg.to_kv()) ck.meta["cfg." + k] = v;
    ck.tensors = model.named_params();
    save_checkpoint(path, ck);
}

SingleScaleModel load_single_model(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.meta["format"] != "single")
        throw Error(path + ": not a single-scale model checkpoint");
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : ck.meta)
        if (k.rfind("cfg.", 0) == 0) kv[k.substr(4)] = v;
    SingleScaleModel model;
    model.cfg = ModelConfig::from_kv(kv);
    model.init(0);
    fill_from_checkpoint(ck, model.named_params());
    return model;
}

void save_multi_model(const std::string& path, MultiScaleModel& model) {
    Checkpoint ck;
    ck.meta["format"] = "multi";
    ck.meta["scales"] = std::to_string(model.subnets.size());
    {
        std::ostringstream r;
        for (std::size_t i = 0; i < model.radii.size(); ++i) {
            if (i) r << ",";
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.17g", model.radii[i]);
            r << buf;
        }
        ck.meta["radii"] = r.str();
    }
    ck.meta["scale_net_hidden"] = join_sizes(model.scale_net_hidden);
    for (const auto& [k, v] : model.subnets[0].cfg.to_kv()) ck.meta["cfg." + k] = v;
    ck.tensors = model.named_params();
    save_checkpoint(path, ck);
}

MultiScaleModel load_multi_model(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.meta["format"] != "multi") throw Error(path + ": not a multi-scale model checkpoint");
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : ck.meta)
        if (k.rfind("cfg.", 0) == 0) kv[k.substr(4)] = v;
    MultiScaleModel model;
    std::size_t s_count = std::stoul(ck.meta.at("scales"));
    ModelConfig cfg = ModelConfig::from_kv(kv);
    model.subnets.assign(s_count, SingleScaleModel{});
    for (auto& s : model.subnets) s.cfg = cfg;
    {
        std::istringstream r(ck.meta.at("radii"));
        std::string tok;
        while (std::getline(r, tok, ',')) model.radii.push_back(std::stod(tok));
    }
    model.scale_net_hidden = parse_sizes(ck.meta.at("scale_net_hidden"));
    model.init(0);
    fill_from_checkpoint(ck, model.named_params());
    return model;
}

}  // namespace pcn
