#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcn/patch.hpp"
#include "pcn/tensor.hpp"

namespace pcn {

struct ModelConfig {
    std::size_t k = 500;  // points per patch
    std::vector<std::size_t> qstn_point_layers{64, 128};
    std::vector<std::size_t> qstn_fc_layers{64};
    std::vector<std::size_t> point_layers{64, 128, 1024};  // last entry = feature width
    std::vector<std::size_t> normal_head{512, 256};
    std::vector<std::size_t> plane_head{256, 128};
    bool uniform_pooling = false;  // plain mean instead of learned weights

    std::size_t feature_width() const { return point_layers.back(); }
    static ModelConfig full();
    static ModelConfig reduced();  // desk-scale profile: K=64, 128-d features

    std::vector<std::pair<std::string, std::string>> to_kv() const;
    static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct Dense {
    TensorPtr W, b;
};

struct SingleScaleModel {
    ModelConfig cfg;
    std::vector<Dense> qstn_point;
    std::vector<Dense> qstn_fc;
    Dense qstn_out;  // emits the identity quaternion at initialization
    std::vector<Dense> point_mlp;
    Dense pool_weight;
    std::vector<Dense> normal_hidden;
    Dense normal_out;
    std::vector<Dense> plane_hidden;
    Dense plane_out;

    void init(std::uint64_t seed);
    std::vector<std::pair<std::string, TensorPtr>> named_params(const std::string& prefix = "");
    std::vector<TensorPtr> params();
    void set_requires_grad(bool on);
};

struct MultiScaleModel {
    std::vector<SingleScaleModel> subnets;  // ordered small to large radius
    std::vector<double> radii;
    std::vector<std::size_t> scale_net_hidden{256};
    std::vector<Dense> scale_hidden;
    Dense scale_out;

    std::size_t scales() const { return subnets.size(); }
    // subnet s is seeded with seed+s, so subnet 0 matches a single-scale
    // model initialized with the same seed
    void init(std::uint64_t seed);
    std::vector<std::pair<std::string, TensorPtr>> named_params();
    std::vector<TensorPtr> params();
    std::vector<TensorPtr> scale_net_params();
};

// unit-quaternion rotation matrices, differentiable in q (normalized inside)
TensorPtr quat_to_rot(const TensorPtr& q);

struct ForwardResult {
    TensorPtr normal;        // [B,3], unit, in the input frame
    TensorPtr plane_probs;   // [B,K]
    TensorPtr quaternion;    // [B,4], unit
    TensorPtr rotation;      // [B,3,3]
    TensorPtr global_feature;  // [B,F]
    TensorPtr pool_weights;  // [B,K], sums to 1 per row
};

ForwardResult single_forward(const SingleScaleModel& model, const TensorPtr& coords);

struct MultiForwardResult {
    std::vector<ForwardResult> per_scale;
    TensorPtr scale_weights;            // [B,S] softmax output
    std::vector<std::size_t> selected;  // argmax per row, ties to the smallest scale
    TensorPtr normal;                   // [B,3] rows copied from the selected subnets
};

MultiForwardResult multi_forward(const MultiScaleModel& model,
                                 const std::vector<TensorPtr>& coords_per_scale);

// unoriented distance min(|n-n^|, |n+n^|) per patch
TensorPtr per_patch_normal_loss(const TensorPtr& predicted, const TensorPtr& ground_truth);
TensorPtr loss_normal(const TensorPtr& predicted, const TensorPtr& ground_truth);  // batch mean
TensorPtr loss_plane(const TensorPtr& probs, const TensorPtr& labels);  // binary cross-entropy
TensorPtr loss_total(const TensorPtr& normal_loss, const TensorPtr& plane_loss);
// sum_s v_s * L_normal_s + (1/S) * sum_s L_plane_s
struct MultiLoss {
    TensorPtr normal_term;  // batch mean of sum_s v_s * L_normal_s
    TensorPtr plane_term;   // (1/S) * sum_s L_plane_s
    TensorPtr total;
};
MultiLoss loss_multi_parts(const std::vector<TensorPtr>& per_patch_normal_losses,
                           const std::vector<TensorPtr>& plane_losses,
                           const TensorPtr& scale_weights);
TensorPtr loss_multi(const std::vector<TensorPtr>& per_patch_normal_losses,
                     const std::vector<TensorPtr>& plane_losses, const TensorPtr& scale_weights);

struct NormalPrediction {
    Vec3 normal{0, 0, 1};
    std::vector<double> plane_probs;
    std::array<double, 4> quaternion{1, 0, 0, 0};
    std::vector<double> scale_weights;  // multi-scale only
    std::size_t selected_scale = 0;     // multi-scale only
};

TensorPtr patch_coords_tensor(const std::vector<const Patch*>& patches);
std::vector<NormalPrediction> predict_batch(const SingleScaleModel& model,
                                            const std::vector<const Patch*>& patches);
NormalPrediction predict(const SingleScaleModel& model, const Patch& patch);
std::vector<NormalPrediction> predict_multi_batch(
    const MultiScaleModel& model, const std::vector<std::vector<const Patch*>>& per_scale);
NormalPrediction predict_multi(const MultiScaleModel& model, const std::vector<Patch>& patches);

void save_single_model(const std::string& path, SingleScaleModel& model);
SingleScaleModel load_single_model(const std::string& path);
void save_multi_model(const std::string& path, MultiScaleModel& model);
MultiScaleModel load_multi_model(const std::string& path);

}  // namespace pcn
