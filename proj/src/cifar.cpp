#include <algorithm>

#include "binary_io.hpp"
#include "tailbalance/error.hpp"
#include "tailbalance/longtail_data.hpp"

namespace tailbalance {

std::vector<CifarRecord> parse_cifar100_records(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kCifarRecordBytes != 0)
    fail(ErrorCode::kMalformedFile, "CIFAR-100: length " + std::to_string(bytes.size()) +
                                        " is not a multiple of " +
                                        std::to_string(kCifarRecordBytes));
  std::vector<CifarRecord> out(bytes.size() / kCifarRecordBytes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto rec = bytes.subspan(i * kCifarRecordBytes, kCifarRecordBytes);
    out[i].coarse_label = rec[0];
    out[i].fine_label = rec[1];
    if (rec[1] >= kCifarClasses)
      fail(ErrorCode::kMalformedRecord, "CIFAR-100: record " + std::to_string(i) +
                                            " has fine label " + std::to_string(rec[1]));
    std::copy(rec.begin() + 2, rec.end(), out[i].pixels.begin());
  }
  return out;
}

std::vector<std::uint8_t> encode_cifar100_records(std::span<const CifarRecord> records) {
  std::vector<std::uint8_t> out;
  out.reserve(records.size() * kCifarRecordBytes);
  for (const auto& r : records) {
    out.push_back(r.coarse_label);
    out.push_back(r.fine_label);
    out.insert(out.end(), r.pixels.begin(), r.pixels.end());
  }
  return out;
}

LabeledDataset cifar100_to_dataset(std::span<const CifarRecord> records) {
  Tensor2 x(records.size(), kCifarImageBytes);
  std::vector<int> y(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto row = x.row(i);
    for (std::size_t p = 0; p < kCifarImageBytes; ++p) row[p] = records[i].pixels[p] / 255.0;
    y[i] = records[i].fine_label;
  }
  return LabeledDataset::from_rows(std::move(x), std::move(y), kCifarClasses);
}

LabeledDataset parse_cifar100_binary(std::span<const std::uint8_t> bytes) {
  return cifar100_to_dataset(parse_cifar100_records(bytes));
}

LabeledDataset downsample_gray(const LabeledDataset& cifar, std::size_t side) {
  constexpr std::size_t kSide = 32, kPlane = kSide * kSide;
  require(cifar.dim() == kCifarImageBytes, "downsample_gray: expects 3072-wide CIFAR rows");
  require(side >= 1 && kSide % side == 0, "downsample_gray: side must divide 32");
  const std::size_t block = kSide / side;
  const double norm = 1.0 / (3.0 * static_cast<double>(block * block));
  Tensor2 x(cifar.size(), side * side);
  for (std::size_t i = 0; i < cifar.size(); ++i) {
    auto src = cifar.features.row(i);
    auto dst = x.row(i);
    for (std::size_t by = 0; by < side; ++by) {
      for (std::size_t bx = 0; bx < side; ++bx) {
        double s = 0.0;
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t dy = 0; dy < block; ++dy)
            for (std::size_t dx = 0; dx < block; ++dx)
              s += src[c * kPlane + (by * block + dy) * kSide + bx * block + dx];
        dst[by * side + bx] = s * norm;
      }
    }
  }
  return LabeledDataset::from_rows(std::move(x), cifar.labels, cifar.num_classes);
}

LabeledDataset load_cifar100(const std::string& path) {
  return parse_cifar100_binary(detail::read_file(path));
}

}  // namespace tailbalance
