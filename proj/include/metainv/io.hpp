#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "metainv/network.hpp"
#include "metainv/tensor.hpp"

namespace metainv {

struct FileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Versioned binary tensor container: 8-byte magic "MINVTNS\n", u32
/// version, u32 rank, u64 dims, then the little-endian f64 payload.
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

/// Weight checkpoint: 8-byte magic "MINVWGT\n", u32 version, config echo
/// (K, S, c, shared flag, schedule constants, L, threshold mode, loss
/// discounts), then every trainable tensor with explicit shape. Save and
/// load round-trip byte-exactly.
struct Checkpoint {
    MetaInvConfig config;
    InitializerWeights weights;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// 16-bit PGM with a linear window over [min, max], for eyeballing.
void save_pgm16(const std::filesystem::path& path, const Tensor& image);

} // namespace metainv
