#pragma once

// Feature container: a little-endian binary payload plus a UTF-8 key=value
// manifest stored next to it at `<path>.manifest`.
//
// Payload layout:
//   "SHZF" u16 version=1 u32 n_teachers u32 n_samples
//   per teacher: u32 name_len, name bytes, u32 native_dim, u32 depth
//   per sample:  u32 id_len, id bytes, u8 label tag, label payload,
//                then n_teachers x (LOW, MID, HIGH) float32 vectors
//   label tags: 0 class {u32}, 1 expression {u32 len, float32[len]},
//               2 survival {float32 time, u8 event}

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "shazam/core/error.hpp"
#include "shazam/feature_store/types.hpp"

namespace shazam {

inline constexpr char kContainerMagic[4] = {'S', 'H', 'Z', 'F'};
inline constexpr std::uint16_t kContainerVersion = 1;

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void put_floats(const std::vector<float>& v) {
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  void append_raw(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : buf_(std::move(bytes)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<float> get_floats(std::size_t n) {
    need(n * sizeof(float));
    std::vector<float> v(n);
    std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
    return v;
  }
  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) fail(ErrorKind::CorruptContainer, "truncated payload");
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "short write to " + path.string());
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace detail

inline std::filesystem::path manifest_path(const std::filesystem::path& container) {
  return std::filesystem::path(container.string() + ".manifest");
}

inline std::string encode_manifest(const FeatureSet& fs) {
  const Manifest& m = fs.manifest;
  std::ostringstream os;
  os << "format=SHZF\n";
  os << "version=" << kContainerVersion << '\n';
  os << "task_kind=" << to_string(m.task) << '\n';
  os << "seed=" << m.seed << '\n';
  os << "n_teachers=" << fs.teachers.size() << '\n';
  os << "n_samples=" << fs.samples.size() << '\n';
  os << "num_classes=" << m.num_classes << '\n';
  os << "genes=";
  for (std::size_t i = 0; i < m.gene_names.size(); ++i) os << (i ? "," : "") << m.gene_names[i];
  os << '\n';
  os << "planted_mode=" << m.planted_mode << '\n';
  os << "planted_strengths=" << detail::join_doubles(m.planted_strengths) << '\n';
  os << "provenance=" << m.provenance << '\n';
  for (const TeacherSpec& t : fs.teachers) {
    if (t.standalone_score)
      os << "teacher." << t.name << ".standalone_score=" << detail::format_double(*t.standalone_score) << '\n';
  }
  for (const auto& [k, v] : m.extra) os << "extra." << k << '=' << v << '\n';
  for (const auto& [k, v] : m.patient_of) os << "patient." << k << '=' << v << '\n';
  for (const auto& [k, v] : m.slide_of) os << "slide." << k << '=' << v << '\n';
  return os.str();
}

inline std::string encode_payload(const FeatureSet& fs) {
  detail::ByteWriter w;
  w.append_raw(kContainerMagic, 4);
  w.put<std::uint16_t>(kContainerVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(fs.teachers.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(fs.samples.size()));
  for (const TeacherSpec& t : fs.teachers) {
    w.put_string(t.name);
    w.put<std::uint32_t>(t.native_dim);
    w.put<std::uint32_t>(t.depth);
  }
  for (const SampleRecord& s : fs.samples) {
    w.put_string(s.id);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.label.index()));
    if (const auto* c = std::get_if<ClassLabel>(&s.label)) {
      w.put<std::uint32_t>(c->index);
    } else if (const auto* e = std::get_if<ExpressionLabel>(&s.label)) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(e->values.size()));
      w.put_floats(e->values);
    } else {
      const auto& sv = std::get<SurvivalLabel>(s.label);
      w.put<float>(sv.time);
      w.put<std::uint8_t>(sv.event);
    }
    for (const MultiScaleFeature& f : s.features)
      for (Scale sc : kAllScales) w.put_floats(f.at(sc));
  }
  return w.bytes();
}

inline void write_feature_set(const FeatureSet& fs, const std::filesystem::path& path) {
  validate(fs);
  detail::write_file(path, encode_payload(fs));
  detail::write_file(manifest_path(path), encode_manifest(fs));
}

namespace detail {

inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::CorruptContainer, "manifest line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline std::uint64_t parse_u64(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::CorruptContainer, "manifest key " + key + " is not an integer");
  }
}

}  // namespace detail

inline FeatureSet decode_feature_set(std::string payload, const std::string& manifest_text) {
  detail::ByteReader r(std::move(payload));
  if (r.remaining() < 4) fail(ErrorKind::CorruptContainer, "file too short for magic bytes");
  const auto magic = r.get<std::uint32_t>();
  std::uint32_t expect = 0;
  std::memcpy(&expect, kContainerMagic, 4);
  require(magic == expect, ErrorKind::CorruptContainer, "bad magic bytes");
  const auto version = r.get<std::uint16_t>();
  require(version == kContainerVersion, ErrorKind::UnsupportedFormat,
          "container version " + std::to_string(version) + " is not supported");

  FeatureSet fs;
  const auto n_teachers = r.get<std::uint32_t>();
  const auto n_samples = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_teachers; ++i) {
    TeacherSpec t;
    t.name = r.get_string();
    t.native_dim = r.get<std::uint32_t>();
    t.depth = r.get<std::uint32_t>();
    fs.teachers.push_back(std::move(t));
  }
  for (std::uint32_t s = 0; s < n_samples; ++s) {
    SampleRecord rec;
    rec.id = r.get_string();
    const auto tag = r.get<std::uint8_t>();
    switch (tag) {
      case 0: rec.label = ClassLabel{r.get<std::uint32_t>()}; break;
      case 1: {
        const auto n = r.get<std::uint32_t>();
        rec.label = ExpressionLabel{r.get_floats(n)};
        break;
      }
      case 2: {
        SurvivalLabel sv;
        sv.time = r.get<float>();
        sv.event = r.get<std::uint8_t>();
        rec.label = sv;
        break;
      }
      default: fail(ErrorKind::CorruptContainer, "unknown label tag " + std::to_string(tag));
    }
    rec.features.resize(n_teachers);
    for (std::uint32_t i = 0; i < n_teachers; ++i)
      for (Scale sc : kAllScales) rec.features[i].at(sc) = r.get_floats(fs.teachers[i].native_dim);
    fs.samples.push_back(std::move(rec));
  }
  require(r.at_end(), ErrorKind::InconsistentContainer, "trailing bytes after the declared samples");

  const auto kv = detail::parse_key_values(manifest_text);
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) fail(ErrorKind::CorruptContainer, "manifest is missing key " + key);
    return it->second;
  };
  require(get("format") == "SHZF", ErrorKind::CorruptContainer, "manifest format is not SHZF");
  require(detail::parse_u64(get("version"), "version") == kContainerVersion, ErrorKind::UnsupportedFormat,
          "manifest version mismatch");
  require(detail::parse_u64(get("n_teachers"), "n_teachers") == n_teachers, ErrorKind::InconsistentContainer,
          "manifest declares " + get("n_teachers") + " teachers, payload has " + std::to_string(n_teachers));
  require(detail::parse_u64(get("n_samples"), "n_samples") == n_samples, ErrorKind::InconsistentContainer,
          "manifest declares " + get("n_samples") + " samples, payload has " + std::to_string(n_samples));

  Manifest& m = fs.manifest;
  try {
    m.task = parse_task_kind(get("task_kind"));
  } catch (const Error&) {
    fail(ErrorKind::CorruptContainer, "unknown task_kind in manifest");
  }
  m.seed = detail::parse_u64(get("seed"), "seed");
  m.num_classes = static_cast<std::uint32_t>(detail::parse_u64(get("num_classes"), "num_classes"));
  m.gene_names = detail::split(get("genes"), ',');
  m.planted_mode = get("planted_mode");
  for (const std::string& tok : detail::split(get("planted_strengths"), ',')) m.planted_strengths.push_back(std::stod(tok));
  m.provenance = get("provenance");

  std::set<std::string> ids;
  for (const SampleRecord& s : fs.samples) ids.insert(s.id);
  for (const auto& [key, value] : kv) {
    auto starts = [&](const char* p) { return key.rfind(p, 0) == 0; };
    if (starts("patient.")) {
      const std::string id = key.substr(8);
      require(ids.count(id) == 1, ErrorKind::InconsistentContainer, "patient map names unknown sample " + id);
      if (value != kUnassigned) m.patient_of[id] = value;
    } else if (starts("slide.")) {
      const std::string id = key.substr(6);
      require(ids.count(id) == 1, ErrorKind::InconsistentContainer, "slide map names unknown sample " + id);
      m.slide_of[id] = value;
    } else if (starts("extra.")) {
      m.extra[key.substr(6)] = value;
    } else if (starts("teacher.")) {
      const std::string rest = key.substr(8);
      const std::string suffix = ".standalone_score";
      require(rest.size() > suffix.size() && rest.compare(rest.size() - suffix.size(), suffix.size(), suffix) == 0,
              ErrorKind::CorruptContainer, "unknown teacher key " + key);
      const std::string name = rest.substr(0, rest.size() - suffix.size());
      bool found = false;
      for (TeacherSpec& t : fs.teachers) {
        if (t.name == name) {
          t.standalone_score = std::stod(value);
          found = true;
        }
      }
      require(found, ErrorKind::InconsistentContainer, "manifest names unknown teacher " + name);
    }
  }
  return fs;
}

inline FeatureSet read_feature_set(const std::filesystem::path& path) {
  std::string payload = detail::read_file(path);
  const auto mpath = manifest_path(path);
  require(std::filesystem::exists(mpath), ErrorKind::InconsistentContainer,
          "missing manifest " + mpath.string());
  FeatureSet fs = decode_feature_set(std::move(payload), detail::read_file(mpath));
  validate(fs);
  return fs;
}

}  // namespace shazam
