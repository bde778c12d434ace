#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pcn/model.hpp"
#include "pcn/rng.hpp"
#include "test_util.hpp"

using namespace pcn;
using testutil::finite_difference_check;
using testutil::random_tensor;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.k = 8;
    c.qstn_point_layers = {4, 8};
    c.qstn_fc_layers = {4};
    c.point_layers = {8, 16};
    c.normal_head = {8};
    c.plane_head = {8};
    return c;
}

TensorPtr random_coords(std::size_t b, std::size_t k, Rng& rng) {
    return random_tensor({b, k, 3}, rng, false, -1.0, 1.0);
}

}  // namespace

TEST_CASE("quaternion rotation matrices") {
    SUBCASE("identity quaternion gives the identity matrix") {
        auto r = quat_to_rot(tensor({1, 4}, {1, 0, 0, 0}));
        std::vector<double> expect{1, 0, 0, 0, 1, 0, 0, 0, 1};
        for (std::size_t i = 0; i < 9; ++i) CHECK(r->values[i] == expect[i]);
    }
    SUBCASE("q and -q give the same matrix") {
        auto a = quat_to_rot(tensor({1, 4}, {0.3, -0.5, 0.7, 0.2}));
        auto b = quat_to_rot(tensor({1, 4}, {-0.3, 0.5, -0.7, -0.2}));
        for (std::size_t i = 0; i < 9; ++i)
            CHECK(a->values[i] == doctest::Approx(b->values[i]).epsilon(1e-15));
    }
    SUBCASE("x-axis half-turn") {
        auto r = quat_to_rot(tensor({1, 4}, {0, 1, 0, 0}));
        std::vector<double> expect{1, 0, 0, 0, -1, 0, 0, 0, -1};
        for (std::size_t i = 0; i < 9; ++i)
            CHECK(r->values[i] == doctest::Approx(expect[i]).epsilon(1e-15));
    }
    SUBCASE("orthogonality and unit determinant for random quaternions") {
        Rng rng(40);
        std::size_t n = 512;
        auto q = random_tensor({n, 4}, rng, false, -1.0, 1.0);
        auto r = quat_to_rot(q);
        for (std::size_t b = 0; b < n; ++b) {
            const double* m = r->values.data() + b * 9;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    double dot = 0;
                    for (int k = 0; k < 3; ++k) dot += m[k * 3 + i] * m[k * 3 + j];
                    CHECK(std::fabs(dot - (i == j ? 1.0 : 0.0)) < 1e-9);
                }
            double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                         m[2] * (m[3] * m[7] - m[4] * m[6]);
            CHECK(std::fabs(det - 1.0) < 1e-9);
        }
    }
    SUBCASE("vanishing quaternions are rejected") {
        CHECK_THROWS_AS(quat_to_rot(tensor({1, 4}, {0, 0, 0, 1e-13})), Error);
    }
    SUBCASE("gradient flows through the construction") {
        Rng rng(41);
        auto q = random_tensor({2, 4}, rng);
        auto make_loss = [&] {
            auto r = quat_to_rot(q);
            auto flat = reshape(r, {18});
            return mean_axis(mul(flat, flat), 0);
        };
        CHECK(finite_difference_check({q}, make_loss) < 1e-4);
    }
}

TEST_CASE("normal loss") {
    auto n = tensor({1, 3}, {0, 0, 1});
    SUBCASE("zero at either sign of the target") {
        CHECK(loss_normal(tensor({1, 3}, {0, 0, 1}), n)->item() == 0.0);
        CHECK(loss_normal(tensor({1, 3}, {0, 0, -1}), n)->item() == 0.0);
    }
    SUBCASE("orthogonal prediction scores sqrt(2)") {
        CHECK(loss_normal(tensor({1, 3}, {1, 0, 0}), n)->item() ==
              doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    }
    SUBCASE("sign invariance is exact") {
        Rng rng(3);
        for (int it = 0; it < 100; ++it) {
            auto a = random_tensor({4, 3}, rng, false);
            auto b = random_tensor({4, 3}, rng, false);
            auto na = scale(a, -1.0), nb = scale(b, -1.0);
            double base = loss_normal(a, b)->item();
            CHECK(loss_normal(na, b)->item() == base);
            CHECK(loss_normal(a, nb)->item() == base);
            CHECK(loss_normal(na, nb)->item() == base);
        }
    }
    SUBCASE("batch version averages per-patch distances") {
        auto pred = tensor({2, 3}, {0, 0, 1, 1, 0, 0});
        auto gt = tensor({2, 3}, {0, 0, 1, 0, 0, 1});
        CHECK(loss_normal(pred, gt)->item() ==
              doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-12));
    }
}

TEST_CASE("plane loss") {
    SUBCASE("perfect prediction is at the clamp floor") {
        auto probs = tensor({1, 4}, {1, 0, 1, 0});
        auto labels = tensor({1, 4}, {1, 0, 1, 0});
        CHECK(loss_plane(probs, labels)->item() <= 1.2e-7);
        CHECK(loss_plane(probs, labels)->item() >= 0.0);
    }
    SUBCASE("coin-flip prediction scores ln 2 regardless of labels") {
        auto probs = full({2, 8}, 0.5);
        Rng rng(9);
        std::vector<double> lab(16);
        for (auto& v : lab) v = rng.integer(2);
        auto labels = tensor({2, 8}, std::move(lab));
        CHECK(loss_plane(probs, labels)->item() ==
              doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("loss falls monotonically as probability approaches the label") {
        auto labels = tensor({1, 1}, {1.0});
        double prev = loss_plane(tensor({1, 1}, {0.5}), labels)->item();
        for (double p : {0.6, 0.7, 0.8, 0.9, 0.99}) {
            double cur = loss_plane(tensor({1, 1}, {p}), labels)->item();
            CHECK(cur < prev);
            prev = cur;
        }
    }
}

TEST_CASE("total loss is the plain sum of the two branches") {
    CHECK(loss_total(scalar(0.0), scalar(0.0))->item() == 0.0);
    CHECK(loss_total(scalar(1.25), scalar(0.0))->item() == 1.25);
    Rng rng(14);
    auto pred_raw = random_tensor({3, 3}, rng);
    auto gt = random_tensor({3, 3}, rng, false);
    auto probs_raw = random_tensor({3, 5}, rng);
    auto labels = tensor({3, 5}, {1, 0, 1, 1, 0, 0, 0, 1, 1, 1, 0, 1, 0, 0, 1});
    auto make_loss = [&] {
        auto l_n = loss_normal(l2_normalize_last(pred_raw), gt);
        auto l_m = loss_plane(sigmoid(probs_raw), labels);
        return loss_total(l_n, l_m);
    };
    CHECK(finite_difference_check({pred_raw, probs_raw}, make_loss) < 1e-4);
}

TEST_CASE("single-scale forward pass") {
    SingleScaleModel model;
    model.cfg = tiny_config();
    model.cfg.k = 32;
    model.init(2024);
    Rng rng(77);
    auto coords = random_coords(2, 32, rng);
    NoGradGuard ng;
    auto out = single_forward(model, coords);

    SUBCASE("output shapes and ranges") {
        CHECK(out.normal->shape == std::vector<std::size_t>{2, 3});
        CHECK(out.plane_probs->shape == std::vector<std::size_t>{2, 32});
        for (std::size_t b = 0; b < 2; ++b) {
            double n = 0;
            for (int a = 0; a < 3; ++a) n += out.normal->values[b * 3 + a] *
                                             out.normal->values[b * 3 + a];
            CHECK(std::fabs(std::sqrt(n) - 1.0) <= 1e-9);
        }
        for (double p : out.plane_probs->values) {
            CHECK(p > 0.0);
            CHECK(p < 1.0);
        }
    }
    SUBCASE("pooling weights form a probability distribution") {
        for (std::size_t b = 0; b < 2; ++b) {
            double sum = 0;
            for (std::size_t j = 0; j < 32; ++j) {
                double w = out.pool_weights->values[b * 32 + j];
                CHECK(w >= 0.0);
                sum += w;
            }
            CHECK(std::fabs(sum - 1.0) <= 1e-9);
        }
    }
    SUBCASE("permuting input rows barely moves the outputs") {
        Rng prng(5);
        auto perm = prng.permutation(32);
        std::vector<double> shuffled(2 * 32 * 3);
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t j = 0; j < 32; ++j)
                for (int a = 0; a < 3; ++a)
                    shuffled[(b * 32 + j) * 3 + a] = coords->values[(b * 32 + perm[j]) * 3 + a];
        auto out2 = single_forward(model, tensor({2, 32, 3}, std::move(shuffled)));
        for (std::size_t i = 0; i < out.normal->size(); ++i)
            CHECK(std::fabs(out.normal->values[i] - out2.normal->values[i]) < 1e-5);
    }
}

TEST_CASE("forced identity pose with equal pooling weights is a plain mean pass") {
    SingleScaleModel model;
    model.cfg = tiny_config();
    model.cfg.k = 16;
    model.init(5);
    // zero the quaternion regressor onto its identity bias and flatten pooling
    for (auto& v : model.qstn_out.W->values) v = 0.0;
    model.qstn_out.b->values = {1, 0, 0, 0};
    for (auto& v : model.pool_weight.W->values) v = 0.0;
    model.pool_weight.b->values = {0.0};

    Rng rng(6);
    auto coords = random_coords(3, 16, rng);
    NoGradGuard ng;
    auto learned = single_forward(model, coords);
    SUBCASE("rotation collapses to the exact identity") {
        for (std::size_t b = 0; b < 3; ++b)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    CHECK(learned.rotation->values[b * 9 + i * 3 + j] == (i == j ? 1.0 : 0.0));
        for (std::size_t b = 0; b < 3; ++b) {
            CHECK(learned.quaternion->values[b * 4] == 1.0);
            for (int a = 1; a < 4; ++a) CHECK(learned.quaternion->values[b * 4 + a] == 0.0);
        }
    }
    SUBCASE("softmax of constant logits equals the uniform-pooling path") {
        model.cfg.uniform_pooling = true;
        auto uniform = single_forward(model, coords);
        for (std::size_t i = 0; i < learned.normal->size(); ++i)
            CHECK(learned.normal->values[i] ==
                  doctest::Approx(uniform.normal->values[i]).epsilon(1e-12));
        for (std::size_t i = 0; i < learned.plane_probs->size(); ++i)
            CHECK(learned.plane_probs->values[i] ==
                  doctest::Approx(uniform.plane_probs->values[i]).epsilon(1e-12));
        model.cfg.uniform_pooling = false;
    }
}

TEST_CASE("non-finite activations name the offending stage") {
    SingleScaleModel model;
    model.cfg = tiny_config();
    model.init(1);
    model.point_mlp[0].W->values[0] = std::numeric_limits<double>::infinity();
    Rng rng(2);
    auto coords = random_coords(1, 8, rng);
    NoGradGuard ng;
    CHECK_THROWS_WITH_AS(single_forward(model, coords), doctest::Contains("point_mlp"), Error);
}

TEST_CASE("multi-scale forward pass") {
    MultiScaleModel model;
    model.subnets.assign(3, SingleScaleModel{});
    for (auto& s : model.subnets) s.cfg = tiny_config();
    model.radii = {0.01, 0.03, 0.05};
    model.scale_net_hidden = {16};
    model.init(11);
    Rng rng(12);
    std::vector<TensorPtr> coords{random_coords(4, 8, rng), random_coords(4, 8, rng),
                                  random_coords(4, 8, rng)};
    NoGradGuard ng;

    SUBCASE("scale weights are a softmax distribution") {
        auto out = multi_forward(model, coords);
        for (std::size_t b = 0; b < 4; ++b) {
            double sum = 0;
            for (std::size_t s = 0; s < 3; ++s) sum += out.scale_weights->values[b * 3 + s];
            CHECK(std::fabs(sum - 1.0) <= 1e-9);
        }
    }
    SUBCASE("reported normal is bitwise the selected subnet's normal") {
        auto out = multi_forward(model, coords);
        for (std::size_t b = 0; b < 4; ++b) {
            std::size_t sel = out.selected[b];
            double best = out.scale_weights->values[b * 3 + sel];
            for (std::size_t s = 0; s < 3; ++s)
                CHECK(best >= out.scale_weights->values[b * 3 + s]);
            for (int a = 0; a < 3; ++a)
                CHECK(out.normal->values[b * 3 + a] ==
                      out.per_scale[sel].normal->values[b * 3 + a]);
        }
    }
    SUBCASE("equal logits give a uniform split and the smallest scale wins") {
        for (auto& d : model.scale_hidden)
            for (auto& v : d.b->values) v = 0.0;
        for (auto& v : model.scale_out.W->values) v = 0.0;
        for (auto& v : model.scale_out.b->values) v = 0.0;
        auto out = multi_forward(model, coords);
        for (double v : out.scale_weights->values)
            CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        for (std::size_t b = 0; b < 4; ++b) CHECK(out.selected[b] == 0);
    }
}

TEST_CASE("multi-scale loss") {
    Rng rng(21);
    std::size_t batch = 5, s_count = 3;
    SUBCASE("derivative with respect to each weight is that scale's loss") {
        std::vector<TensorPtr> normal_losses, plane_losses;
        for (std::size_t s = 0; s < s_count; ++s) {
            normal_losses.push_back(random_tensor({batch}, rng, false, 0.1, 1.5));
            plane_losses.push_back(random_tensor({}, rng, false, 0.1, 1.0));
        }
        auto v = random_tensor({batch, s_count}, rng, true, 0.05, 1.0);
        auto loss = loss_multi(normal_losses, plane_losses, v);
        backward(loss);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t s = 0; s < s_count; ++s)
                CHECK(v->grad[b * s_count + s] ==
                      doctest::Approx(normal_losses[s]->values[b] / batch).epsilon(1e-12));
        v->grad.clear();
        auto make_loss = [&] { return loss_multi(normal_losses, plane_losses, v); };
        CHECK(finite_difference_check({v}, make_loss) < 1e-4);
    }
    SUBCASE("constant per-scale losses make the weighted term constant on the simplex") {
        double c = 0.7734;
        std::vector<TensorPtr> normal_losses(s_count, full({batch}, c));
        std::vector<TensorPtr> plane_losses(s_count, scalar(0.0));
        for (int it = 0; it < 20; ++it) {
            auto v = softmax_last(random_tensor({batch, s_count}, rng, false, -3.0, 3.0));
            CHECK(loss_multi(normal_losses, plane_losses, v)->item() ==
                  doctest::Approx(c).epsilon(1e-12));
        }
    }
    SUBCASE("a single scale reduces to the two-branch sum") {
        auto nl = random_tensor({batch}, rng, false, 0.0, 2.0);
        auto pl = random_tensor({}, rng, false, 0.0, 1.0);
        auto v = full({batch, 1}, 1.0);
        double multi = loss_multi({nl}, {pl}, v)->item();
        double single = loss_total(mean_axis(nl, 0), pl)->item();
        CHECK(multi == single);
    }
}

TEST_CASE("end-to-end gradients of the full model match finite differences") {
    SingleScaleModel model;
    model.cfg = tiny_config();
    model.init(33);
    Rng rng(34);
    auto coords = random_coords(2, 8, rng);
    auto gt = l2_normalize_last(random_tensor({2, 3}, rng, false));
    std::vector<double> lab(16);
    for (auto& v : lab) v = rng.integer(2);
    auto labels = tensor({2, 8}, std::move(lab));
    auto make_loss = [&] {
        auto out = single_forward(model, coords);
        return loss_total(loss_normal(out.normal, gt), loss_plane(out.plane_probs, labels));
    };
    double worst = finite_difference_check(model.params(), make_loss);
    MESSAGE("worst end-to-end relative error: ", worst);
    CHECK(worst < 1e-3);
}

TEST_CASE("checkpoints restore models exactly") {
    testutil::TempDir tmp;
    Rng rng(91);
    SUBCASE("single-scale") {
        SingleScaleModel model;
        model.cfg = tiny_config();
        model.init(7);
        auto path = tmp.file("single.ckpt");
        save_single_model(path, model);
        auto back = load_single_model(path);
        auto coords = random_coords(1, 8, rng);
        NoGradGuard ng;
        auto a = single_forward(model, coords);
        auto b = single_forward(back, coords);
        for (std::size_t i = 0; i < a.normal->size(); ++i)
            CHECK(a.normal->values[i] == b.normal->values[i]);
        for (std::size_t i = 0; i < a.plane_probs->size(); ++i)
            CHECK(a.plane_probs->values[i] == b.plane_probs->values[i]);
    }
    SUBCASE("multi-scale with radii metadata") {
        MultiScaleModel model;
        model.subnets.assign(2, SingleScaleModel{});
        for (auto& s : model.subnets) s.cfg = tiny_config();
        model.radii = {0.03, 0.05};
        model.scale_net_hidden = {8};
        model.init(8);
        auto path = tmp.file("multi.ckpt");
        save_multi_model(path, model);
        auto back = load_multi_model(path);
        CHECK(back.radii == model.radii);
        std::vector<TensorPtr> coords{random_coords(2, 8, rng), random_coords(2, 8, rng)};
        NoGradGuard ng;
        auto a = multi_forward(model, coords);
        auto b = multi_forward(back, coords);
        CHECK(a.selected == b.selected);
        for (std::size_t i = 0; i < a.normal->size(); ++i)
            CHECK(a.normal->values[i] == b.normal->values[i]);
    }
}

TEST_CASE("prediction wrapper returns valid fields") {
    SingleScaleModel model;
    model.cfg = tiny_config();
    model.cfg.k = 8;
    model.init(3);
    Patch patch;
    patch.radius = 0.05;
    Rng rng(4);
    for (int i = 0; i < 8; ++i)
        patch.coords.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    auto pred = predict(model, patch);
    CHECK(std::fabs(norm3(pred.normal) - 1.0) <= 1e-9);
    CHECK(pred.plane_probs.size() == 8);
    for (double p : pred.plane_probs) {
        CHECK(p > 0.0);
        CHECK(p < 1.0);
    }
}
