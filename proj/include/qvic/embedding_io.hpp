#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "qvic/compressor.hpp"
#include "qvic/numerics.hpp"

namespace qvic {

// Frame embeddings, "QVEM" version 1:
//   magic "QVEM", u32 version, u32 T, u32 P, u32 D (little-endian), then
//   T*P*D float32, frame-major then patch-major.
// Question embeddings, "QVTQ" version 1:
//   magic "QVTQ", u32 version, u32 N_t, u32 D, then N_t*D float32.
// Compressor weights, "QVWT" version 1:
//   magic "QVWT", u32 version, u32 layers, heads, model_dim, ff_dim,
//   context_per_frame, patches_per_frame, max_frames, then every parameter
//   tensor as float64 in for_each_parameter order.
// Readers throw DataError on bad magic, version, or length.

struct FrameEmbeddings {
  std::size_t patches = 0;
  std::size_t model_dim = 0;
  std::vector<Matrix> frames;  // each P x D
};

void write_qvem(std::ostream& out, const FrameEmbeddings& frames);
FrameEmbeddings read_qvem(std::istream& in);
void write_qvem_file(const std::filesystem::path& path, const FrameEmbeddings& frames);
FrameEmbeddings read_qvem_file(const std::filesystem::path& path);

void write_qvtq(std::ostream& out, const Matrix& question);
Matrix read_qvtq(std::istream& in);
void write_qvtq_file(const std::filesystem::path& path, const Matrix& question);
Matrix read_qvtq_file(const std::filesystem::path& path);

void write_qvwt(std::ostream& out, const CompressorConfig& config, const CompressorWeights& weights);
// `config` supplies everything the header does not store; header fields
// must agree with it.
CompressorWeights read_qvwt(std::istream& in, const CompressorConfig& config);
void write_qvwt_file(const std::filesystem::path& path, const CompressorConfig& config,
                     const CompressorWeights& weights);
CompressorWeights read_qvwt_file(const std::filesystem::path& path, const CompressorConfig& config);

}  // namespace qvic
