#pragma once

#include "msbridge/model.hpp"
#include "msbridge/rng.hpp"

namespace msbridge::testing {

// Adds seeded noise to every live parameter, including the zero-initialized
// output head, so an otherwise fresh model produces nontrivial velocities.
// The EMA shadow is left untouched.
inline void perturb_model(VectorFieldModel& model, uint64_t seed, float scale) {
  Rng rng(seed);
  for (auto& layer : model.layers()) {
    for (float& v : layer.w.data) v += scale * static_cast<float>(rng.normal(0.0, 1.0));
    for (float& v : layer.b.data) v += scale * static_cast<float>(rng.normal(0.0, 1.0));
  }
  for (float& v : model.embedding().data) v += scale * static_cast<float>(rng.normal(0.0, 1.0));
}

}  // namespace msbridge::testing
