#pragma once

#include <string>

#include "oc3d/net/siamese.hpp"

namespace oc3d::net {

// Checkpoint container ("OC3W"): arch metadata string plus named f32 tensors,
// little-endian. Works for either scalar type; data is converted to f32 on
// save and widened on load. Non-learnable companions (input mean, label
// stats) travel as extra named tensors.
void save_checkpoint(const std::string& path, const SiameseNet<float>& net);
void save_checkpoint(const std::string& path, const SiameseNet<double>& net);

SiameseNet<float> load_checkpoint_f32(const std::string& path);
SiameseNet<double> load_checkpoint_f64(const std::string& path);

}  // namespace oc3d::net
