#include <fstream>
#include <iterator>

#include "binary_io.hpp"
#include "tailbalance/autodiff.hpp"

namespace tailbalance {

namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "short write to " + path);
}

}  // namespace detail

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  model.validate();
  detail::ByteWriter w;
  w.magic("LTMC");
  w.uint(kCheckpointVersion);
  w.uint(static_cast<std::uint32_t>(model.layers.size()));
  for (const Layer& l : model.layers) {
    w.uint(static_cast<std::uint64_t>(l.weight.rows()));
    w.uint(static_cast<std::uint64_t>(l.weight.cols()));
    w.uint(static_cast<std::uint8_t>(l.activation));
    for (double v : l.weight.values()) w.f64(v);
    for (double v : l.bias.values()) w.f64(v);
  }
  return w.take();
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "LTMC checkpoint");
  r.expect_magic("LTMC");
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion)
    fail(ErrorCode::kMalformedFile, "LTMC checkpoint: unsupported version " + std::to_string(version));
  const auto count = r.uint<std::uint32_t>();
  Model m;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto rows = r.uint<std::uint64_t>();
    const auto cols = r.uint<std::uint64_t>();
    const auto act = r.uint<std::uint8_t>();
    if (act > 1) fail(ErrorCode::kMalformedFile, "LTMC checkpoint: unknown activation tag");
    // Guard the allocation against garbage dimensions.
    if (rows == 0 || cols == 0 || rows > r.remaining() || cols > r.remaining() ||
        rows * cols > r.remaining() / 8)
      fail(ErrorCode::kMalformedFile, "LTMC checkpoint: truncated");
    Layer l;
    l.weight = Tensor2(rows, cols);
    l.bias = Tensor2(1, rows);
    l.activation = static_cast<Activation>(act);
    for (double& v : l.weight.values()) v = r.f64();
    for (double& v : l.bias.values()) v = r.f64();
    m.layers.push_back(std::move(l));
  }
  if (r.remaining() != 0) fail(ErrorCode::kMalformedFile, "LTMC checkpoint: trailing bytes");
  try {
    m.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kMalformedFile, std::string("LTMC checkpoint: ") + e.what());
  }
  return m;
}

void save_checkpoint(const Model& model, const std::string& path) {
  detail::write_file(path, encode_checkpoint(model));
}

Model load_checkpoint(const std::string& path) {
  return decode_checkpoint(detail::read_file(path));
}

}  // namespace tailbalance
