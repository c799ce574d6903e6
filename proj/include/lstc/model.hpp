#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "lstc/feature_bank.hpp"
#include "lstc/long_term.hpp"
#include "lstc/short_term.hpp"

namespace lstc {

struct ModelDims {
    std::size_t d = 16;
    std::size_t c = 8;
    std::size_t k = 2;   // cascade depth
    std::size_t m = 2;   // heads per unit
    std::size_t d_k = 8; // key projection width
    bool attn_scale = true;

    void validate() const;
};

struct ModelState {
    ModelDims dims;
    int stage = 1;         // which training stage produced this model
    WindowSpec window;     // bank window the model was trained with
    double threshold = 0.5;
    ShortTermParams short_branch;
    LongTermParams long_branch;
};

ModelState init_model(const ModelDims& dims, std::uint64_t seed);

// Visits every trainable parameter in a fixed order. This order defines the
// checkpoint layout, the SGD update order, and gradient-report naming.
void visit_params(ModelState& m,
                  const std::function<void(const std::string&, Param&)>& fn);

void zero_grads(ModelState& m);
std::size_t param_count(ModelState& m);

void save_model(const ModelState& m, const std::string& path);
ModelState load_model(const std::string& path);

} // namespace lstc
