// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "envdiff/tensor.hpp"

namespace envdiff {

/// PFM parse failure; message names the byte offset of the problem.
class ParseError : public std::runtime_error {
  public:
    ParseError(const std::string& msg, size_t byte_offset)
        : std::runtime_error(msg + " (byte " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    size_t offset;
};

/// Portable Float Map. Header "PF" (3 channels) or "Pf" (1 channel), then
/// "W H", then a negative scale (little-endian payload). Rows are stored
/// bottom-to-top; row 0 of `samples` is the top row. Round trips are
/// bit-exact for every finite 32-bit float.
struct PfmImage {
    int width = 0, height = 0, channels = 0;
    std::vector<float> samples;  // row-major top-to-bottom, interleaved channels

    float& at(int i, int j, int k) {
        return samples[(static_cast<size_t>(i) * width + j) * channels + k];
    }
    float at(int i, int j, int k) const {
        return samples[(static_cast<size_t>(i) * width + j) * channels + k];
    }
};

PfmImage load_pfm(const std::string& path);
void save_pfm(const std::string& path, const PfmImage& img);

PfmImage to_pfm(const Tensor3& t);
Tensor3 from_pfm(const PfmImage& img);

Tensor3 load_pfm_tensor(const std::string& path);
void save_pfm_tensor(const std::string& path, const Tensor3& t);

}  // namespace envdiff
