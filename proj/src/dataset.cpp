#include "oc3d/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "oc3d/rng.hpp"

namespace oc3d {

namespace {

// Record file layout (all little-endian):
//   magic "OC3D" | version u32 = 1 | width u32 | height u32 | channels u32 |
//   record_count u64 | stats mean[6] f64 | stats std[6] f64 | records.
// Record: target_id u64 | view_a u32 | view_b u32 | label u8 | pad u8[3] |
//   baseline_deg f32 | pose_raw f32[6] | pose_z f32[6] | patch_a | patch_b.
constexpr char kMagic[4] = {'O', 'C', '3', 'D'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& buf, const T& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  const auto* p = reinterpret_cast<const char*>(&v);
  buf.append(p, sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t* off) {
  if (*off + sizeof(T) > buf.size()) fail(Err::CorruptFile, "record file: truncated");
  T v;
  std::memcpy(&v, buf.data() + *off, sizeof(T));
  *off += sizeof(T);
  return v;
}

float view_baseline_deg(const View& a, const Vec3& ta, const View& b, const Vec3& tb) {
  const Vec3 da = (ta - a.extrinsics.center).normalized();
  const Vec3 db = (tb - b.extrinsics.center).normalized();
  const double c = std::clamp(da.dot(db), -1.0, 1.0);
  return static_cast<float>(std::acos(c) * 180.0 / M_PI);
}

}  // namespace

std::array<double, 6> pose_to_array(const Pose6D& p) {
  return {p.angles.roll, p.angles.yaw, p.angles.pitch, p.translation.x(), p.translation.y(),
          p.translation.z()};
}

std::vector<PairRecord> make_pairs(const std::vector<TaggedBundle>& bundles, double neg_per_pos,
                                   std::uint64_t seed) {
  if (bundles.size() < 2) fail(Err::InsufficientData, "make_pairs: need >= 2 bundles");
  if (neg_per_pos < 0) fail(Err::InvalidParams, "make_pairs: neg_per_pos must be >= 0");

  std::vector<PairRecord> out;
  // Positives: within-bundle pairs of unpruned views.
  for (const TaggedBundle& tb : bundles) {
    if (!tb.bundle.usable()) continue;
    const auto& views = tb.bundle.views;
    for (std::size_t i = 0; i < views.size(); ++i) {
      if (views[i].pruned) continue;
      for (std::size_t j = i + 1; j < views.size(); ++j) {
        if (views[j].pruned) continue;
        PairRecord r;
        r.target_id = tb.target_id;
        r.view_a = static_cast<std::uint32_t>(i);
        r.view_b = static_cast<std::uint32_t>(j);
        r.label = 1;
        r.baseline_deg =
            view_baseline_deg(views[i], tb.bundle.target.point, views[j], tb.bundle.target.point);
        try {
          const auto pose = pose_to_array(relative_pose(views[i].extrinsics, views[j].extrinsics));
          for (int k = 0; k < 6; ++k) r.pose_raw[k] = static_cast<float>(pose[k]);
        } catch (const Error& e) {
          if (e.code() == Err::GimbalLock) continue;  // rare; drop the pair
          throw;
        }
        r.patch_a = views[i].patch;
        r.patch_b = views[j].patch;
        out.push_back(std::move(r));
      }
    }
  }
  const std::size_t positives = out.size();
  if (positives == 0) fail(Err::InsufficientData, "make_pairs: no usable positive pairs");

  // Flat index of unpruned views for negative sampling.
  struct Slot {
    std::size_t bundle;
    std::size_t view;
  };
  std::vector<Slot> slots;
  for (std::size_t b = 0; b < bundles.size(); ++b) {
    if (!bundles[b].bundle.usable()) continue;
    for (std::size_t v = 0; v < bundles[b].bundle.views.size(); ++v)
      if (!bundles[b].bundle.views[v].pruned) slots.push_back({b, v});
  }

  std::mt19937_64 g(hash_combine(seed, 0x9a175));
  const auto wanted = static_cast<std::size_t>(std::llround(neg_per_pos * positives));
  std::size_t made = 0;
  std::size_t guard = 0;
  while (made < wanted && guard < wanted * 100 + 1000) {
    ++guard;
    const Slot a = slots[uniform_index(g, slots.size())];
    const Slot b = slots[uniform_index(g, slots.size())];
    if (bundles[a.bundle].target_id == bundles[b.bundle].target_id) continue;  // negatives are cross-target
    const View& va = bundles[a.bundle].bundle.views[a.view];
    const View& vb = bundles[b.bundle].bundle.views[b.view];
    PairRecord r;
    r.target_id = bundles[a.bundle].target_id;
    r.view_a = static_cast<std::uint32_t>(a.view);
    r.view_b = static_cast<std::uint32_t>(b.view);
    r.label = 0;
    r.baseline_deg = view_baseline_deg(va, bundles[a.bundle].bundle.target.point, vb,
                                       bundles[b.bundle].bundle.target.point);
    try {
      const auto pose = pose_to_array(relative_pose(va.extrinsics, vb.extrinsics));
      for (int k = 0; k < 6; ++k) r.pose_raw[k] = static_cast<float>(pose[k]);
    } catch (const Error& e) {
      if (e.code() != Err::GimbalLock) throw;  // pose is unused for negatives; keep zeros
    }
    r.patch_a = va.patch;
    r.patch_b = vb.patch;
    out.push_back(std::move(r));
    ++made;
  }
  return out;
}

ZScoreStats fit_zscore(const std::vector<PairRecord>& records) {
  ZScoreStats s;
  std::array<double, 6> sum{}, sum2{};
  std::size_t n = 0;
  for (const PairRecord& r : records) {
    if (r.label != 1) continue;  // pose is trained on matches only
    for (int k = 0; k < 6; ++k) {
      sum[k] += r.pose_raw[k];
      sum2[k] += static_cast<double>(r.pose_raw[k]) * r.pose_raw[k];
    }
    ++n;
  }
  if (n < 2) fail(Err::InsufficientData, "fit_zscore: need >= 2 matching records");
  for (int k = 0; k < 6; ++k) {
    s.mean[k] = sum[k] / n;
    const double var = std::max(0.0, sum2[k] / n - s.mean[k] * s.mean[k]);
    s.stddev[k] = std::max(std::sqrt(var), 1e-8);
  }
  return s;
}

std::array<double, 6> apply_zscore(const ZScoreStats& stats, const std::array<double, 6>& pose) {
  std::array<double, 6> z;
  for (int k = 0; k < 6; ++k) z[k] = (pose[k] - stats.mean[k]) / stats.stddev[k];
  return z;
}

std::array<double, 6> invert_zscore(const ZScoreStats& stats, const std::array<double, 6>& z) {
  std::array<double, 6> p;
  for (int k = 0; k < 6; ++k) p[k] = z[k] * stats.stddev[k] + stats.mean[k];
  return p;
}

void zscore_records(std::vector<PairRecord>& records, const ZScoreStats& stats) {
  for (PairRecord& r : records) {
    std::array<double, 6> pose;
    for (int k = 0; k < 6; ++k) pose[k] = r.pose_raw[k];
    const auto z = apply_zscore(stats, pose);
    for (int k = 0; k < 6; ++k) r.pose_z[k] = static_cast<float>(z[k]);
  }
}

void write_records(const std::string& path, const std::vector<PairRecord>& records,
                   const ZScoreStats& stats) {
  if (records.empty()) fail(Err::InvalidParams, "write_records: no records");
  const int w = records[0].patch_a.width, h = records[0].patch_a.height, c = records[0].patch_a.channels;
  for (const PairRecord& r : records)
    if (r.patch_a.width != w || r.patch_a.height != h || r.patch_a.channels != c ||
        !r.patch_a.same_shape(r.patch_b))
      fail(Err::InvalidParams, "write_records: inconsistent patch sizes");

  std::string buf;
  buf.reserve(64 + records.size() * (40 + 2 * static_cast<std::size_t>(w) * h * c));
  buf.append(kMagic, 4);
  put(buf, kVersion);
  put(buf, static_cast<std::uint32_t>(w));
  put(buf, static_cast<std::uint32_t>(h));
  put(buf, static_cast<std::uint32_t>(c));
  put(buf, static_cast<std::uint64_t>(records.size()));
  for (double v : stats.mean) put(buf, v);
  for (double v : stats.stddev) put(buf, v);
  for (const PairRecord& r : records) {
    put(buf, r.target_id);
    put(buf, r.view_a);
    put(buf, r.view_b);
    put(buf, r.label);
    buf.append(3, '\0');
    put(buf, r.baseline_deg);
    for (float v : r.pose_raw) put(buf, v);
    for (float v : r.pose_z) put(buf, v);
    buf.append(reinterpret_cast<const char*>(r.patch_a.pixels.data()), r.patch_a.pixels.size());
    buf.append(reinterpret_cast<const char*>(r.patch_b.pixels.data()), r.patch_b.pixels.size());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(Err::Io, "cannot open for write: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) fail(Err::Io, "write failed: " + path);
}

RecordFile read_records(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Err::MissingArtifact, "cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t off = 0;
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
    fail(Err::CorruptFile, "record file: bad magic");
  off = 4;
  if (take<std::uint32_t>(buf, &off) != kVersion) fail(Err::CorruptFile, "record file: bad version");
  const auto w = take<std::uint32_t>(buf, &off);
  const auto h = take<std::uint32_t>(buf, &off);
  const auto c = take<std::uint32_t>(buf, &off);
  if (w == 0 || h == 0 || (c != 1 && c != 3)) fail(Err::CorruptFile, "record file: bad patch shape");
  const auto count = take<std::uint64_t>(buf, &off);
  RecordFile out;
  for (int k = 0; k < 6; ++k) out.stats.mean[k] = take<double>(buf, &off);
  for (int k = 0; k < 6; ++k) out.stats.stddev[k] = take<double>(buf, &off);
  const std::size_t patch_bytes = static_cast<std::size_t>(w) * h * c;
  out.records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    PairRecord r;
    r.target_id = take<std::uint64_t>(buf, &off);
    r.view_a = take<std::uint32_t>(buf, &off);
    r.view_b = take<std::uint32_t>(buf, &off);
    r.label = take<std::uint8_t>(buf, &off);
    off += 3;  // pad
    if (r.label > 1) fail(Err::CorruptFile, "record file: bad label");
    r.baseline_deg = take<float>(buf, &off);
    for (float& v : r.pose_raw) v = take<float>(buf, &off);
    for (float& v : r.pose_z) v = take<float>(buf, &off);
    if (off + 2 * patch_bytes > buf.size()) fail(Err::CorruptFile, "record file: truncated");
    r.patch_a = ImagePatch::create(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
    r.patch_b = ImagePatch::create(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
    std::memcpy(r.patch_a.pixels.data(), buf.data() + off, patch_bytes);
    off += patch_bytes;
    std::memcpy(r.patch_b.pixels.data(), buf.data() + off, patch_bytes);
    off += patch_bytes;
    out.records.push_back(std::move(r));
  }
  if (off != buf.size()) fail(Err::CorruptFile, "record file: trailing bytes");
  return out;
}

SplitResult geofenced_split(const std::vector<Aabb>& scene_bounds, double test_fraction,
                            double buffer_m, std::uint64_t seed) {
  const std::size_t n = scene_bounds.size();
  if (n < 2) fail(Err::InvalidParams, "geofenced_split: need >= 2 scenes");
  if (!(test_fraction > 0) || !(test_fraction < 1))
    fail(Err::InvalidParams, "geofenced_split: test_fraction must be in (0, 1)");
  if (buffer_m < 0) fail(Err::InvalidParams, "geofenced_split: buffer_m must be >= 0");

  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  std::mt19937_64 g(hash_combine(seed, 0x5b117));
  shuffle_indices(g, ids);
  std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * n));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

  SplitResult out;
  out.test.assign(ids.begin(), ids.begin() + n_test);
  std::sort(out.test.begin(), out.test.end());

  auto aabb_distance = [](const Aabb& a, const Aabb& b) {
    double d2 = 0;
    for (int k = 0; k < 3; ++k) {
      const double gap = std::max({0.0, a.lo[k] - b.hi[k], b.lo[k] - a.hi[k]});
      d2 += gap * gap;
    }
    return std::sqrt(d2);
  };

  for (std::size_t i = 0; i < n; ++i) {
    if (std::binary_search(out.test.begin(), out.test.end(), i)) continue;
    bool buffered = false;
    for (std::size_t t : out.test)
      if (aabb_distance(scene_bounds[i], scene_bounds[t]) < buffer_m) {
        buffered = true;
        break;
      }
    if (!buffered) out.train.push_back(i);
  }
  return out;
}

}  // namespace oc3d
