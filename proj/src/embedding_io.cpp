#include "qvic/embedding_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "qvic/error.hpp"

namespace qvic {
namespace {

constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), 4);
}

void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

void put_f64(std::ostream& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), 8);
}

void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw DataError(std::string(what) + ": file is truncated");
  }
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  std::array<unsigned char, 4> b{};
  read_exact(in, reinterpret_cast<char*>(b.data()), 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

float get_f32(std::istream& in, const char* what) { return std::bit_cast<float>(get_u32(in, what)); }

double get_f64(std::istream& in, const char* what) {
  std::array<unsigned char, 8> b{};
  read_exact(in, reinterpret_cast<char*>(b.data()), 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

void expect_header(std::istream& in, const char (&magic)[5], const char* what) {
  char got[4];
  read_exact(in, got, 4, what);
  if (std::memcmp(got, magic, 4) != 0) throw DataError(std::string(what) + ": bad magic");
  const std::uint32_t version = get_u32(in, what);
  if (version != kVersion) {
    throw DataError(std::string(what) + ": unsupported version " + std::to_string(version));
  }
}

void expect_end(std::istream& in, const char* what) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError(std::string(what) + ": trailing bytes after payload");
  }
}

std::uint32_t narrow(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw DataError(std::string(what) + ": dimension exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace

void write_qvem(std::ostream& out, const FrameEmbeddings& fe) {
  out.write("QVEM", 4);
  put_u32(out, kVersion);
  put_u32(out, narrow(fe.frames.size(), "QVEM"));
  put_u32(out, narrow(fe.patches, "QVEM"));
  put_u32(out, narrow(fe.model_dim, "QVEM"));
  for (const auto& f : fe.frames) {
    if (f.rows() != fe.patches || f.cols() != fe.model_dim) throw ShapeError("QVEM: frame shape mismatch");
    for (double v : f.values()) put_f32(out, static_cast<float>(v));
  }
}

FrameEmbeddings read_qvem(std::istream& in) {
  expect_header(in, "QVEM", "QVEM");
  const std::uint32_t t = get_u32(in, "QVEM");
  FrameEmbeddings fe;
  fe.patches = get_u32(in, "QVEM");
  fe.model_dim = get_u32(in, "QVEM");
  if (t == 0 || fe.patches == 0 || fe.model_dim == 0) throw DataError("QVEM: zero dimension");
  fe.frames.reserve(t);
  for (std::uint32_t f = 0; f < t; ++f) {
    Matrix m(fe.patches, fe.model_dim);
    for (auto& v : m.values()) v = get_f32(in, "QVEM");
    fe.frames.push_back(std::move(m));
  }
  expect_end(in, "QVEM");
  return fe;
}

void write_qvem_file(const std::filesystem::path& path, const FrameEmbeddings& frames) {
  auto out = open_out(path);
  write_qvem(out, frames);
}

FrameEmbeddings read_qvem_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_qvem(in);
}

void write_qvtq(std::ostream& out, const Matrix& q) {
  out.write("QVTQ", 4);
  put_u32(out, kVersion);
  put_u32(out, narrow(q.rows(), "QVTQ"));
  put_u32(out, narrow(q.cols(), "QVTQ"));
  for (double v : q.values()) put_f32(out, static_cast<float>(v));
}

Matrix read_qvtq(std::istream& in) {
  expect_header(in, "QVTQ", "QVTQ");
  const std::uint32_t rows = get_u32(in, "QVTQ");
  const std::uint32_t cols = get_u32(in, "QVTQ");
  if (cols == 0) throw DataError("QVTQ: zero embedding width");
  Matrix q(rows, cols);
  for (auto& v : q.values()) v = get_f32(in, "QVTQ");
  expect_end(in, "QVTQ");
  return q;
}

void write_qvtq_file(const std::filesystem::path& path, const Matrix& question) {
  auto out = open_out(path);
  write_qvtq(out, question);
}

Matrix read_qvtq_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_qvtq(in);
}

void write_qvwt(std::ostream& out, const CompressorConfig& config, const CompressorWeights& weights) {
  weights.check(config);
  out.write("QVWT", 4);
  put_u32(out, kVersion);
  for (std::size_t v : {config.layers, config.heads, config.model_dim, config.ff_dim,
                        config.context_per_frame, config.patches_per_frame, config.max_frames}) {
    put_u32(out, narrow(v, "QVWT"));
  }
  CompressorWeights copy = weights;
  for_each_parameter(copy, [&](std::string_view, std::span<double> values) {
    for (double v : values) put_f64(out, v);
  });
}

CompressorWeights read_qvwt(std::istream& in, const CompressorConfig& config) {
  expect_header(in, "QVWT", "QVWT");
  const std::size_t expected[] = {config.layers, config.heads, config.model_dim, config.ff_dim,
                                  config.context_per_frame, config.patches_per_frame,
                                  config.max_frames};
  const char* names[] = {"layers", "heads", "model_dim", "ff_dim", "context_per_frame",
                         "patches_per_frame", "max_frames"};
  for (std::size_t i = 0; i < 7; ++i) {
    const std::uint32_t got = get_u32(in, "QVWT");
    if (got != expected[i]) {
      throw DataError(std::string("QVWT: ") + names[i] + " is " + std::to_string(got) +
                      " but the config says " + std::to_string(expected[i]));
    }
  }
  // Shapes come from a freshly initialized stack; values are overwritten.
  CompressorWeights w = CompressorWeights::init(config);
  for_each_parameter(w, [&](std::string_view, std::span<double> values) {
    for (auto& v : values) v = get_f64(in, "QVWT");
  });
  expect_end(in, "QVWT");
  return w;
}

void write_qvwt_file(const std::filesystem::path& path, const CompressorConfig& config,
                     const CompressorWeights& weights) {
  auto out = open_out(path);
  write_qvwt(out, config, weights);
}

CompressorWeights read_qvwt_file(const std::filesystem::path& path, const CompressorConfig& config) {
  auto in = open_in(path);
  return read_qvwt(in, config);
}

}  // namespace qvic
