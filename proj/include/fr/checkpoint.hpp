#pragma once

#include <string>

#include "fr/network.hpp"

namespace fr {

// Binary checkpoint: magic "FRCK", format version, architecture descriptor,
// then every parameter tensor as little-endian 32-bit floats with shape
// headers. Loading reconstructs the Net exactly (up to f32 rounding).
void save_checkpoint(const Net& net, const std::string& path);
Net load_checkpoint(const std::string& path);

}  // namespace fr
