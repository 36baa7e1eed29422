#pragma once

#include <map>
#include <string>

#include "qsdt/core/tensor.hpp"

namespace qsdt {

// Execution modes shared by every layer.
//
// kFdCapture runs the ordinary training forward while freezing the rounding
// residual of each straight-through site; kFdReplay then evaluates the smooth
// pass-through surrogate (clip + frozen residual). The surrogate agrees with
// the real forward at the capture point and its exact derivative is the
// straight-through rule, which is what the finite-difference gradient oracles
// differentiate.
enum class RunMode {
    kTrain,      // batch statistics (updated), rounded quant/spike paths
    kEval,       // running statistics, rounded paths
    kFdCapture,  // batch statistics (frozen), rounded paths, residuals saved
    kFdReplay,   // batch statistics (frozen), surrogate paths from residuals
};

inline bool uses_batch_stats(RunMode m) { return m != RunMode::kEval; }

struct SurrogateStore {
    std::map<std::string, Tensor> residuals;

    void put(const std::string& key, Tensor t) { residuals[key] = std::move(t); }

    const Tensor& get(const std::string& key) const {
        auto it = residuals.find(key);
        if (it == residuals.end())
            throw StateError("surrogate residual missing for site " + key);
        return it->second;
    }
};

}  // namespace qsdt
