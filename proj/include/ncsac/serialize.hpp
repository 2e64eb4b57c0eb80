#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ncsac {

// Flat little-endian model container:
//   magic "NCSACMDL" | u32 version | u32 kind | kind-specific payload
// Scalars are u64 or IEEE-754 f64; a matrix is u64 rows, u64 cols, then
// rows*cols f64 in row-major order.
inline constexpr char kModelMagic[8] = {'N', 'C', 'S', 'A', 'C', 'M', 'D', 'L'};
inline constexpr std::uint32_t kModelVersion = 1;

enum class ModelKind : std::uint32_t { encoder = 1, policy = 2 };

class BinaryWriter {
 public:
  BinaryWriter(ModelKind kind);
  void u64(std::uint64_t v);
  void f64(double v);
  void matrix(const Eigen::MatrixXd& m);
  void vector(const Eigen::VectorXd& v);
  void save(const std::filesystem::path& path) const;
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  void u32(std::uint32_t v);
  std::vector<std::uint8_t> bytes_;
};

class BinaryReader {
 public:
  BinaryReader(std::vector<std::uint8_t> bytes, ModelKind expected);
  static BinaryReader open(const std::filesystem::path& path,
                           ModelKind expected);
  std::uint64_t u64();
  double f64();
  Eigen::MatrixXd matrix();
  Eigen::VectorXd vector();
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::uint32_t u32();
  void need(std::size_t count) const;
  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace ncsac
