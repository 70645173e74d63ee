#pragma once

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "recloss/mf.hpp"

namespace recloss {

// Binary container, all fields little-endian:
//   char[8]  magic "RECLOSS\0"
//   u32      version (1)
//   u32      mode (0 dot, 1 cosine, 2 ease)
//   u64      num_users
//   u64      num_items
//   u32      dim
//   f32      temperature
//   f32[num_users * dim]  user matrix, row-major
//   f32[num_items * dim]  item matrix, row-major
// EASE weights use num_users = 0 and dim = num_items.

inline constexpr std::array<char, 8> kCheckpointMagic = {'R', 'E', 'C', 'L', 'O', 'S', 'S', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointMode : std::uint32_t { dot = 0, cosine = 1, ease = 2 };

struct Checkpoint {
  CheckpointMode mode = CheckpointMode::dot;
  float temperature = 1.0f;
  Matrix users;  // empty for ease
  Matrix items;  // item embeddings, or the item-item weight matrix for ease
};

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t b = 0; b < sizeof(T); ++b) out.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * b)) & 0xff));
}

template <class T>
T get_le(std::istream& in) {
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    const int c = in.get();
    if (c == EOF) throw std::runtime_error("checkpoint truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * b);
  }
  return static_cast<T>(v);
}

inline void put_f32(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
inline float get_f32(std::istream& in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }

}  // namespace detail

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_le(out, kCheckpointVersion);
  detail::put_le(out, static_cast<std::uint32_t>(ck.mode));
  detail::put_le(out, static_cast<std::uint64_t>(ck.users.rows()));
  detail::put_le(out, static_cast<std::uint64_t>(ck.items.rows()));
  detail::put_le(out, static_cast<std::uint32_t>(ck.items.cols()));
  detail::put_f32(out, ck.temperature);
  for (Eigen::Index k = 0; k < ck.users.size(); ++k) detail::put_f32(out, ck.users.data()[k]);
  for (Eigen::Index k = 0; k < ck.items.size(); ++k) detail::put_f32(out, ck.items.data()[k]);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kCheckpointMagic) throw std::runtime_error("not a recloss checkpoint: " + path.string());
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto mode = detail::get_le<std::uint32_t>(in);
  if (mode > 2) throw std::runtime_error("unknown checkpoint mode " + std::to_string(mode));
  ck.mode = static_cast<CheckpointMode>(mode);
  const auto nu = detail::get_le<std::uint64_t>(in);
  const auto ni = detail::get_le<std::uint64_t>(in);
  const auto d = detail::get_le<std::uint32_t>(in);
  ck.temperature = detail::get_f32(in);
  ck.users.resize(static_cast<Eigen::Index>(nu), d);
  ck.items.resize(static_cast<Eigen::Index>(ni), d);
  for (Eigen::Index k = 0; k < ck.users.size(); ++k) ck.users.data()[k] = detail::get_f32(in);
  for (Eigen::Index k = 0; k < ck.items.size(); ++k) ck.items.data()[k] = detail::get_f32(in);
  return ck;
}

inline Checkpoint to_checkpoint(const ScoringModel& m) {
  return {m.mode == ScoreMode::dot ? CheckpointMode::dot : CheckpointMode::cosine,
          static_cast<float>(m.temperature), m.user_embeddings, m.item_embeddings};
}

inline ScoringModel to_model(const Checkpoint& ck) {
  if (ck.mode == CheckpointMode::ease) throw std::invalid_argument("checkpoint holds EASE weights, not embeddings");
  return {ck.users, ck.items, ck.mode == CheckpointMode::dot ? ScoreMode::dot : ScoreMode::cosine,
          static_cast<double>(ck.temperature)};
}

inline Checkpoint ease_checkpoint(const Eigen::MatrixXd& weights) {
  Checkpoint ck;
  ck.mode = CheckpointMode::ease;
  ck.items = weights;
  return ck;
}

}  // namespace recloss
