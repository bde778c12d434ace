#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pcn/rng.hpp"
#include "pcn/tensor.hpp"

namespace testutil {

// Central finite differences against the autodiff gradient for every entry of
// every leaf in `leaves`. `make_loss` must rebuild the graph from the current
// leaf values. Returns the worst relative error.
inline double finite_difference_check(const std::vector<pcn::TensorPtr>& leaves,
                                      const std::function<pcn::TensorPtr()>& make_loss,
                                      double h = 1e-6) {
    for (const auto& leaf : leaves) leaf->grad.clear();
    auto loss = make_loss();
    pcn::backward(loss);
    double worst = 0.0;
    for (const auto& leaf : leaves) {
        for (std::size_t i = 0; i < leaf->size(); ++i) {
            double x0 = leaf->values[i];
            double analytic = leaf->grad.empty() ? 0.0 : leaf->grad[i];
            double fd;
            {
                pcn::NoGradGuard ng;
                leaf->values[i] = x0 + h;
                double fplus = make_loss()->item();
                leaf->values[i] = x0 - h;
                double fminus = make_loss()->item();
                leaf->values[i] = x0;
                fd = (fplus - fminus) / (2.0 * h);
            }
            double denom = std::max({1.0, std::fabs(analytic), std::fabs(fd)});
            worst = std::max(worst, std::fabs(analytic - fd) / denom);
        }
    }
    return worst;
}

inline pcn::TensorPtr random_tensor(std::vector<std::size_t> shape, pcn::Rng& rng,
                                    bool requires_grad = true, double lo = -1.0,
                                    double hi = 1.0) {
    std::size_t n = pcn::shape_numel(shape);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return pcn::tensor(std::move(shape), std::move(v), requires_grad);
}

class TempDir {
  public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("pcn_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

  private:
    std::filesystem::path path_;
};

}  // namespace testutil
