#include "gounsafe/optimizer.hpp"

#include <cmath>

namespace gounsafe {

void Adam::step(ParamMap& params, const ParamMap& grads) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, w] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        const Tensor& g = git->second;
        if (!g.same_shape(w))
            throw ShapeMismatch("gradient shape mismatch for parameter " + name);
        Tensor& m = m_.try_emplace(name, Tensor(w.shape())).first->second;
        Tensor& v = v_.try_emplace(name, Tensor(w.shape())).first->second;
        for (std::size_t i = 0; i < w.size(); ++i) {
            m.at(i) = cfg_.beta1 * m.at(i) + (1.0 - cfg_.beta1) * g.at(i);
            v.at(i) = cfg_.beta2 * v.at(i) + (1.0 - cfg_.beta2) * g.at(i) * g.at(i);
            double mhat = m.at(i) / bc1;
            double vhat = v.at(i) / bc2;
            w.at(i) -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace gounsafe
