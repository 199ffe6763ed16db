#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "gounsafe/tensor.hpp"

namespace gounsafe {

// Named parameter collection. std::map keeps element addresses stable, so
// tensors can be registered on a tape by pointer while training mutates them
// in place between iterations.
using ParamMap = std::map<std::string, Tensor>;

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamMap& params, const ParamMap& grads);

    std::int64_t steps_taken() const { return t_; }

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    ParamMap m_;
    ParamMap v_;
};

}  // namespace gounsafe
