#include "pcn/tensor.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace pcn {

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

double Tensor::item() const {
    if (values.size() != 1)
        throw Error("item: tensor " + shape_str(shape) + " is not a scalar");
    return values[0];
}

void Tensor::ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

void Tensor::accumulate_grad(const std::vector<double>& g) {
    if (g.size() != values.size())
        throw Error("accumulate_grad: size mismatch on op '" + std::string(op) + "'");
    ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

TensorPtr tensor(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size())
        throw Error("tensor: shape " + shape_str(shape) + " does not match " +
                    std::to_string(values.size()) + " values");
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->values = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr zeros(std::vector<std::size_t> shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

TensorPtr full(std::vector<std::size_t> shape, double value, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

TensorPtr scalar(double value, bool requires_grad) {
    return tensor({1}, {value}, requires_grad);
}

void backward(const TensorPtr& loss) {
    if (!loss) throw Error("backward: null tensor");
    if (loss->size() != 1)
        throw Error("backward: loss must be scalar, got shape " + shape_str(loss->shape));
    if (loss->parents.empty() && !loss->requires_grad)
        throw Error("backward: tensor is not on the autodiff tape");

    // iterative post-order DFS; list has parents before children
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> visited;
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor* p = node->parents[next].get();
            ++next;
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad();
    loss->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* node = *it;
        if (!node->backprop) continue;
        node->ensure_grad();
        node->backprop(*node);
    }
}

SgdState make_sgd(const std::vector<TensorPtr>& params, double learning_rate, double momentum) {
    if (learning_rate <= 0.0) throw Error("make_sgd: learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw Error("make_sgd: momentum must be in [0,1)");
    SgdState s;
    s.learning_rate = learning_rate;
    s.momentum = momentum;
    s.velocity.reserve(params.size());
    for (const auto& p : params) s.velocity.emplace_back(p->size(), 0.0);
    return s;
}

void sgd_step(const std::vector<TensorPtr>& params, SgdState& state) {
    if (params.size() != state.velocity.size())
        throw Error("sgd_step: parameter count does not match optimizer state");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        if (p.grad.size() != p.values.size())
            throw Error("sgd_step: missing gradient for parameter " + std::to_string(i));
        auto& v = state.velocity[i];
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = state.momentum * v[j] + p.grad[j];
            p.values[j] -= state.learning_rate * v[j];
        }
        p.grad.clear();
    }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path);
    if (!out) throw Error("save_checkpoint: cannot open " + path);
    out << "PCN_CHECKPOINT 1\n";
    for (const auto& [k, v] : ckpt.meta) out << "meta " << k << " " << v << "\n";
    char buf[40];
    for (const auto& [name, t] : ckpt.tensors) {
        out << "tensor " << name << " " << t->shape.size();
        for (std::size_t d : t->shape) out << " " << d;
        out << "\n";
        for (std::size_t i = 0; i < t->values.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", t->values[i]);
            if (i) out << " ";
            out << buf;
        }
        out << "\n";
    }
    out << "end\n";
    if (!out) throw Error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("load_checkpoint: cannot open " + path);
    std::string header;
    std::getline(in, header);
    if (header != "PCN_CHECKPOINT 1")
        throw Error("load_checkpoint: " + path + ": unsupported header '" + header + "'");
    Checkpoint ckpt;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "end") return ckpt;
        if (tag == "meta") {
            std::string key;
            ls >> key;
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value[0] == ' ') value.erase(0, 1);
            ckpt.meta[key] = value;
        } else if (tag == "tensor") {
            std::string name;
            std::size_t rank = 0;
            ls >> name >> rank;
            std::vector<std::size_t> shape(rank);
            for (auto& d : shape) {
                if (!(ls >> d)) throw Error("load_checkpoint: bad dims for tensor " + name);
            }
            std::size_t n = shape_numel(shape);
            std::vector<double> vals(n);
            for (std::size_t i = 0; i < n; ++i) {
                if (!(in >> vals[i]))
                    throw Error("load_checkpoint: truncated values for tensor " + name);
            }
            std::getline(in, line);  // consume rest of the value line
            ckpt.tensors.emplace_back(name, tensor(std::move(shape), std::move(vals)));
        } else {
            throw Error("load_checkpoint: " + path + ": unexpected line '" + line + "'");
        }
    }
    throw Error("load_checkpoint: " + path + ": missing end marker");
}

}  // namespace pcn
