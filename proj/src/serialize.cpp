#include "ncsac/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ncsac/error.hpp"

namespace ncsac {

BinaryWriter::BinaryWriter(ModelKind kind) {
  bytes_.insert(bytes_.end(), std::begin(kModelMagic), std::end(kModelMagic));
  u32(kModelVersion);
  u32(static_cast<std::uint32_t>(kind));
}

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void BinaryWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::matrix(const Eigen::MatrixXd& m) {
  u64(static_cast<std::uint64_t>(m.rows()));
  u64(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
}

void BinaryWriter::vector(const Eigen::VectorXd& v) {
  matrix(Eigen::MatrixXd(v.transpose()));
}

void BinaryWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes_.data()),
            static_cast<std::streamsize>(bytes_.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

BinaryReader::BinaryReader(std::vector<std::uint8_t> bytes, ModelKind expected)
    : bytes_(std::move(bytes)) {
  need(sizeof(kModelMagic));
  if (std::memcmp(bytes_.data(), kModelMagic, sizeof(kModelMagic)) != 0) {
    throw ParseError("not a model file (bad magic)");
  }
  pos_ = sizeof(kModelMagic);
  if (const auto version = u32(); version != kModelVersion) {
    throw ParseError("unsupported model version " + std::to_string(version));
  }
  if (const auto kind = u32(); kind != static_cast<std::uint32_t>(expected)) {
    throw ParseError("model file holds kind " + std::to_string(kind) +
                     ", expected " +
                     std::to_string(static_cast<std::uint32_t>(expected)));
  }
}

BinaryReader BinaryReader::open(const std::filesystem::path& path,
                                ModelKind expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return BinaryReader(std::move(bytes), expected);
}

void BinaryReader::need(std::size_t count) const {
  if (bytes_.size() - pos_ < count) throw ParseError("model file truncated");
}

std::uint32_t BinaryReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

std::uint64_t BinaryReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

Eigen::MatrixXd BinaryReader::matrix() {
  const auto rows = u64();
  const auto cols = u64();
  if (rows > (1u << 24) || cols > (1u << 24)) {
    throw ParseError("implausible matrix shape in model file");
  }
  need(rows * cols * 8);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows),
                    static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
  }
  return m;
}

Eigen::VectorXd BinaryReader::vector() {
  Eigen::MatrixXd m = matrix();
  if (m.rows() != 1) throw ParseError("expected a row vector in model file");
  return m.row(0).transpose();
}

}  // namespace ncsac
