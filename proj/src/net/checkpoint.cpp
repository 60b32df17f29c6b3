#include "oc3d/net/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace oc3d::net {

namespace {

constexpr char kMagic[4] = {'O', 'C', '3', 'W'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::string& buf, const std::string& s) {
  put(buf, static_cast<std::uint32_t>(s.size()));
  buf.append(s);
}

template <typename T>
T take(const std::string& buf, std::size_t* off) {
  if (*off + sizeof(T) > buf.size()) fail(Err::CorruptFile, "checkpoint: truncated");
  T v;
  std::memcpy(&v, buf.data() + *off, sizeof(T));
  *off += sizeof(T);
  return v;
}

std::string take_string(const std::string& buf, std::size_t* off) {
  const auto n = take<std::uint32_t>(buf, off);
  if (*off + n > buf.size()) fail(Err::CorruptFile, "checkpoint: truncated string");
  std::string s(buf.data() + *off, n);
  *off += n;
  return s;
}

// key=value fields joined by ';', first field is the tower token string.
template <typename T>
std::string arch_meta(const SiameseNet<T>& net) {
  std::string s = net.arch.spec;
  s += ";input=" + std::to_string(net.arch.input.h) + "x" + std::to_string(net.arch.input.w) + "x" +
       std::to_string(net.arch.input.c);
  s += ";fusion=" + std::to_string(net.fusion_units);
  s += ";pose_param=" + net.pose_param;
  return s;
}

struct Meta {
  std::string tokens;
  int h = 0, w = 0, c = 0;
  int fusion = 0;
  std::string pose_param;
};

Meta parse_meta(const std::string& s) {
  Meta m;
  std::size_t pos = 0;
  int field = 0;
  while (pos <= s.size()) {
    const auto next = s.find(';', pos);
    const std::string part = s.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    if (field == 0) {
      m.tokens = part;
    } else {
      const auto eq = part.find('=');
      if (eq == std::string::npos) fail(Err::CorruptFile, "checkpoint: bad arch metadata");
      const std::string key = part.substr(0, eq), val = part.substr(eq + 1);
      if (key == "input") {
        if (std::sscanf(val.c_str(), "%dx%dx%d", &m.h, &m.w, &m.c) != 3)
          fail(Err::CorruptFile, "checkpoint: bad input field");
      } else if (key == "fusion") {
        m.fusion = std::stoi(val);
      } else if (key == "pose_param") {
        m.pose_param = val;
      }
    }
    if (next == std::string::npos) break;
    pos = next + 1;
    ++field;
  }
  if (m.tokens.empty() || m.h <= 0 || m.fusion <= 0 || m.pose_param.empty())
    fail(Err::CorruptFile, "checkpoint: incomplete arch metadata");
  return m;
}

template <typename T>
void save_impl(const std::string& path, const SiameseNet<T>& net) {
  std::string buf;
  buf.append(kMagic, 4);
  put(buf, kVersion);
  put_string(buf, arch_meta(net));

  struct Entry {
    std::string name;
    std::vector<int> shape;
    const T* data;
    std::size_t count;
  };
  std::vector<Entry> entries;
  for (const auto& p : net.params) entries.push_back({p.name, p.shape, p.data.data(), p.data.size()});

  std::vector<T> mean3(net.input_mean.begin(), net.input_mean.end());
  std::vector<T> lmean(net.label_mean.begin(), net.label_mean.end());
  std::vector<T> lstd(net.label_std.begin(), net.label_std.end());
  entries.push_back({"input_mean", {3}, mean3.data(), mean3.size()});
  entries.push_back({"label_mean", {static_cast<int>(lmean.size())}, lmean.data(), lmean.size()});
  entries.push_back({"label_std", {static_cast<int>(lstd.size())}, lstd.data(), lstd.size()});

  put(buf, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_string(buf, e.name);
    put(buf, static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) put(buf, static_cast<std::int64_t>(d));
    for (std::size_t i = 0; i < e.count; ++i) put(buf, static_cast<float>(e.data[i]));
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) fail(Err::Io, "cannot open for write: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) fail(Err::Io, "write failed: " + path);
}

template <typename T>
SiameseNet<T> load_impl(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Err::MissingArtifact, "cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
    fail(Err::CorruptFile, "checkpoint: bad magic");
  std::size_t off = 4;
  if (take<std::uint32_t>(buf, &off) != kVersion) fail(Err::CorruptFile, "checkpoint: bad version");
  const Meta meta = parse_meta(take_string(buf, &off));

  SiameseNet<T> net =
      build_net<T>(parse_arch(meta.tokens, meta.h, meta.w, meta.c), meta.fusion, meta.pose_param);

  const auto n_entries = take<std::uint32_t>(buf, &off);
  for (std::uint32_t e = 0; e < n_entries; ++e) {
    const std::string name = take_string(buf, &off);
    const auto ndim = take<std::uint32_t>(buf, &off);
    std::size_t count = 1;
    std::vector<int> shape;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const auto v = take<std::int64_t>(buf, &off);
      if (v < 1) fail(Err::CorruptFile, "checkpoint: bad tensor extent");
      shape.push_back(static_cast<int>(v));
      count *= static_cast<std::size_t>(v);
    }
    std::vector<T> data(count);
    for (std::size_t i = 0; i < count; ++i) data[i] = static_cast<T>(take<float>(buf, &off));

    if (name == "input_mean") {
      if (count != 3) fail(Err::CorruptFile, "checkpoint: input_mean must have 3 entries");
      for (int i = 0; i < 3; ++i) net.input_mean[i] = static_cast<double>(data[i]);
      continue;
    }
    if (name == "label_mean" || name == "label_std") {
      if (count != static_cast<std::size_t>(net.pose_dim))
        fail(Err::CorruptFile, "checkpoint: label stats size mismatch");
      auto& dst = name == "label_mean" ? net.label_mean : net.label_std;
      dst.assign(data.begin(), data.end());
      continue;
    }
    bool found = false;
    for (auto& p : net.params) {
      if (p.name != name) continue;
      if (p.shape != shape) fail(Err::CorruptFile, "checkpoint: shape mismatch for " + name);
      p.data = std::move(data);
      found = true;
      break;
    }
    if (!found) fail(Err::CorruptFile, "checkpoint: unknown tensor " + name);
  }
  if (off != buf.size()) fail(Err::CorruptFile, "checkpoint: trailing bytes");
  return net;
}

}  // namespace

void save_checkpoint(const std::string& path, const SiameseNet<float>& net) { save_impl(path, net); }
void save_checkpoint(const std::string& path, const SiameseNet<double>& net) { save_impl(path, net); }
SiameseNet<float> load_checkpoint_f32(const std::string& path) { return load_impl<float>(path); }
SiameseNet<double> load_checkpoint_f64(const std::string& path) { return load_impl<double>(path); }

}  // namespace oc3d::net
