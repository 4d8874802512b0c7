#include "contourcnn/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <thread>

#include "binary_io.hpp"
#include "contourcnn/layers.hpp"

namespace contourcnn {

std::string_view to_string(Representation r) {
  return r == Representation::Cartesian ? "cartesian" : "polar";
}

Representation parse_representation(std::string_view s) {
  if (s == "cartesian") return Representation::Cartesian;
  if (s == "polar") return Representation::Polar;
  throw UsageError("unknown representation '" + std::string(s) + "'");
}

std::string_view to_string(Subset s) {
  switch (s) {
    case Subset::Digits: return "digits";
    case Subset::UppercaseLetters: return "letters";
    case Subset::Synthetic: return "synthetic";
  }
  return "unknown";
}

Subset parse_subset(std::string_view s) {
  if (s == "digits") return Subset::Digits;
  if (s == "letters") return Subset::UppercaseLetters;
  if (s == "synthetic") return Subset::Synthetic;
  throw UsageError("unknown subset '" + std::string(s) + "'");
}

std::vector<std::string> class_names(Index class_count) {
  std::vector<std::string> names;
  if (class_count == 3) return {"circle", "square", "triangle"};
  for (Index c = 0; c < class_count; ++c) {
    if (class_count == 26) {
      names.emplace_back(1, static_cast<char>('A' + c));
    } else {
      names.push_back(std::to_string(c));
    }
  }
  return names;
}

std::string validate_sample(const ContourSample& s, Index class_count) {
  if (s.features.rows() < 3) return "fewer than 3 vertices";
  if (s.features.cols() != 2) return "feature depth is not 2";
  if (s.label < 0 || s.label >= class_count) return "label out of range";
  if (!s.features.allFinite()) return "non-finite feature";
  if (s.representation == Representation::Cartesian) {
    if (s.features.minCoeff() < 0.0 || s.features.maxCoeff() > 1.0) return "coordinate outside [0,1]";
  } else {
    if (s.features.col(0).cwiseAbs().maxCoeff() > std::numbers::pi) return "angle outside [-pi,pi]";
    if (s.features.col(1).minCoeff() < 0.0 || s.features.col(1).maxCoeff() > 1.0) {
      return "length outside [0,1]";
    }
    if (std::abs(s.features.col(1).sum() - 1.0) > 1e-9) return "lengths do not sum to 1";
  }
  return {};
}

ContourSample make_sample(const ContourPoints& contour, Index label, Index source_id,
                          Representation representation) {
  ContourSample s;
  s.label = label;
  s.source_id = source_id;
  s.representation = representation;
  s.features = representation == Representation::Cartesian ? Matrix(encode_cartesian(contour).vertices)
                                                           : Matrix(encode_polar(contour).vertices);
  return s;
}

// --- IDX ---------------------------------------------------------------------

namespace {

std::string gz_slurp(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw IngestionError("cannot open " + path.string());
  std::string out;
  char buf[1 << 16];
  int n = 0;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) out.append(buf, static_cast<std::size_t>(n));
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw IngestionError("read error in " + path.string());
  return out;
}

class BigEndian {
 public:
  BigEndian(const std::string& data, const std::filesystem::path& path) : data_(data), path_(path) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(data_[pos_ + i]);
    pos_ += 4;
    return v;
  }
  const unsigned char* take(std::size_t n, const char* what) {
    need(n, what);
    const auto* p = reinterpret_cast<const unsigned char*>(data_.data() + pos_);
    pos_ += n;
    return p;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw IngestionError(path_.string() + " at byte " + std::to_string(pos_) + ": " + msg);
  }

 private:
  void need(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) {
      fail(std::string("truncated file while reading ") + what);
    }
  }
  const std::string& data_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

IdxData read_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, bool transpose) {
  const std::string img_bytes = gz_slurp(images_path);
  const std::string lbl_bytes = gz_slurp(labels_path);

  BigEndian img(img_bytes, images_path);
  if (img.u32("magic") != kImageMagic) img.fail("bad image magic (expected 0x00000803)");
  const std::uint32_t count = img.u32("image count");
  const std::uint32_t rows = img.u32("row count");
  const std::uint32_t cols = img.u32("column count");

  BigEndian lbl(lbl_bytes, labels_path);
  if (lbl.u32("magic") != kLabelMagic) lbl.fail("bad label magic (expected 0x00000801)");
  const std::uint32_t label_count = lbl.u32("label count");
  if (label_count != count) {
    lbl.fail("label count " + std::to_string(label_count) + " does not match image count " +
             std::to_string(count));
  }

  IdxData out;
  out.images.reserve(count);
  out.labels.reserve(count);
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  for (std::uint32_t i = 0; i < count; ++i) {
    const unsigned char* p = img.take(pixels, "pixels");
    GrayImage g;
    g.width = cols;
    g.height = rows;
    g.pixels.assign(p, p + pixels);
    if (transpose) {
      GrayImage t;
      t.width = rows;
      t.height = cols;
      t.pixels.resize(pixels);
      for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < cols; ++c) t.pixels[c * rows + r] = g.pixels[r * cols + c];
      g = std::move(t);
    }
    out.images.push_back(std::move(g));
    out.labels.push_back(*lbl.take(1, "label"));
  }
  return out;
}

Index select_subset(IdxData& data, Subset subset) {
  std::optional<int> offset;
  int lo = 0, hi = 0;
  if (subset == Subset::Digits) {
    offset = 0, lo = 0, hi = 9;
  } else if (subset == Subset::UppercaseLetters) {
    const bool letters_split =
        !data.labels.empty() && *std::min_element(data.labels.begin(), data.labels.end()) >= 1 &&
        *std::max_element(data.labels.begin(), data.labels.end()) <= 26;
    if (letters_split) {
      offset = 1, lo = 1, hi = 26;
    } else {
      offset = 10, lo = 10, hi = 35;
    }
  } else {
    throw UsageError("select_subset: the synthetic subset has no IDX source");
  }
  IdxData kept;
  Index dropped = 0;
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    const int l = data.labels[i];
    if (l < lo || l > hi) {
      ++dropped;
      continue;
    }
    kept.images.push_back(std::move(data.images[i]));
    kept.labels.push_back(l - *offset);
  }
  data = std::move(kept);
  return dropped;
}

// --- Dataset building ----------------------------------------------------------

Index DropReport::total() const {
  Index n = 0;
  for (const auto& [reason, count] : counts) n += count;
  return n;
}

BuildResult build_contour_dataset(const IdxData& data, Representation representation,
                                  int threshold, Index min_length, unsigned workers) {
  const std::size_t n = data.images.size();
  std::vector<std::optional<ContourSample>> slots(n);
  std::vector<std::string> reasons(n);

  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < n; i += stride) {
      try {
        const ContourPoints c = trace_outer_contour(binarize(data.images[i], threshold));
        if (c.size() < min_length) {
          reasons[i] = "too-short";
          continue;
        }
        slots[i] = make_sample(c, data.labels[i], static_cast<Index>(i), representation);
      } catch (const ExtractionError& e) {
        reasons[i] = e.reason();
      } catch (const UsageError&) {
        reasons[i] = "encoding";
      }
    }
  };

  workers = std::max(1u, workers);
  if (workers == 1 || n < 64) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }

  BuildResult out;
  out.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i]) {
      out.samples.push_back(std::move(*slots[i]));
    } else {
      ++out.drops.counts[reasons[i]];
    }
  }
  return out;
}

// --- Synthetic shapes -------------------------------------------------------

namespace {

constexpr Index kSyntheticSize = 28;
constexpr Index kBoundarySamples = 120;

bool inside(const Points& poly, double x, double y) {
  bool in = false;
  const Index n = poly.rows();
  for (Index i = 0, j = n - 1; i < n; j = i++) {
    const double xi = poly(i, 0), yi = poly(i, 1);
    const double xj = poly(j, 0), yj = poly(j, 1);
    if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) in = !in;
  }
  return in;
}

}  // namespace

GrayImage render_shape(Index shape_class, const Eigen::Vector2d& centre, double radius,
                       double rotation, double noise, std::uint64_t jitter_seed) {
  std::mt19937_64 rng(jitter_seed);
  Points boundary(kBoundarySamples, 2);
  if (shape_class == 0) {
    for (Index k = 0; k < kBoundarySamples; ++k) {
      const double t = rotation + 2.0 * std::numbers::pi * static_cast<double>(k) / kBoundarySamples;
      boundary.row(k) << radius * std::cos(t), radius * std::sin(t);
    }
  } else {
    const Index corners = shape_class == 1 ? 4 : 3;
    const Index per_edge = kBoundarySamples / corners;
    for (Index c = 0; c < corners; ++c) {
      const double t0 = rotation + 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(corners);
      const double t1 = t0 + 2.0 * std::numbers::pi / static_cast<double>(corners);
      const Eigen::Vector2d a(radius * std::cos(t0), radius * std::sin(t0));
      const Eigen::Vector2d b(radius * std::cos(t1), radius * std::sin(t1));
      for (Index k = 0; k < per_edge; ++k) {
        const double f = static_cast<double>(k) / static_cast<double>(per_edge);
        boundary.row(c * per_edge + k) = ((1.0 - f) * a + f * b).transpose();
      }
    }
  }
  for (Index k = 0; k < kBoundarySamples; ++k) {
    const double jitter = noise > 0.0 ? noise * radius * uniform_draw(rng, -1.0, 1.0) : 0.0;
    const double r = boundary.row(k).norm();
    if (r > 0.0) boundary.row(k) *= (r + jitter) / r;
  }
  boundary.rowwise() += centre.transpose();

  GrayImage img;
  img.width = img.height = kSyntheticSize;
  img.pixels.assign(kSyntheticSize * kSyntheticSize, 0);
  for (Index y = 0; y < kSyntheticSize; ++y)
    for (Index x = 0; x < kSyntheticSize; ++x)
      if (inside(boundary, static_cast<double>(x), static_cast<double>(y))) {
        img.pixels[static_cast<std::size_t>(y * kSyntheticSize + x)] = 255;
      }
  return img;
}

std::vector<ContourSample> synthetic_shapes(Index per_class, double noise, std::uint64_t seed,
                                            Representation representation, int threshold) {
  if (per_class < 1) throw UsageError("synthetic_shapes: per_class must be >= 1");
  if (noise < 0.0 || noise >= 0.2) throw UsageError("synthetic_shapes: noise must be in [0, 0.2)");
  std::mt19937_64 rng(seed);
  std::vector<ContourSample> out;
  out.reserve(static_cast<std::size_t>(per_class * kSyntheticClasses));
  for (Index i = 0; i < per_class; ++i) {
    for (Index cls = 0; cls < kSyntheticClasses; ++cls) {
      for (;;) {
        const Eigen::Vector2d centre(uniform_draw(rng, 11.0, 16.0), uniform_draw(rng, 11.0, 16.0));
        const double radius = uniform_draw(rng, 7.0, 10.0);
        const double rotation = uniform_draw(rng, 0.0, 2.0 * std::numbers::pi);
        const std::uint64_t jitter_seed = rng();
        try {
          const GrayImage img = render_shape(cls, centre, radius, rotation, noise, jitter_seed);
          const ContourPoints c = trace_outer_contour(binarize(img, threshold));
          out.push_back(make_sample(c, cls, static_cast<Index>(out.size()), representation));
          break;
        } catch (const ExtractionError&) {
          // redraw
        }
      }
    }
  }
  return out;
}

// --- Cache -----------------------------------------------------------------

void cache_write(const SampleCache& cache, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.bytes("CCNT");
  w.u16(kCacheVersion);
  w.u8(cache.representation == Representation::Cartesian ? 0 : 1);
  w.u16(static_cast<std::uint16_t>(cache.class_count));
  w.u32(static_cast<std::uint32_t>(cache.samples.size()));
  for (const ContourSample& s : cache.samples) {
    if (s.features.cols() != 2) throw CacheError("cache_write: sample feature depth must be 2");
    if (s.representation != cache.representation) {
      throw CacheError("cache_write: sample representation differs from cache representation");
    }
    w.u16(static_cast<std::uint16_t>(s.label));
    w.u32(static_cast<std::uint32_t>(s.features.rows()));
    for (Index r = 0; r < s.features.rows(); ++r) {
      w.f64(s.features(r, 0));
      w.f64(s.features(r, 1));
    }
  }
  w.seal();
  if (!detail::write_file_atomic(path, w.data())) throw CacheError("cannot write " + path.string());
}

SampleCache cache_read(const std::filesystem::path& path) {
  std::string data;
  if (!detail::read_file(path, data)) throw CacheError("cannot open " + path.string());
  if (data.size() < 17) throw CacheError(path.string() + ": file too short for a CCNT cache");
  const std::string_view body(data.data(), data.size() - 4);
  auto fail = [&](std::size_t offset, const char* what) -> void {
    throw CacheError(path.string() + " at byte " + std::to_string(offset) + ": truncated " + what);
  };
  detail::ByteReader tail(std::string_view(data).substr(data.size() - 4), fail);
  if (tail.u32() != detail::crc32_of(body)) throw CacheError(path.string() + ": checksum mismatch");

  detail::ByteReader r(body, fail);
  if (r.bytes(4) != "CCNT") throw CacheError(path.string() + ": not a CCNT cache");
  const std::uint16_t version = r.u16();
  if (version != kCacheVersion) {
    throw CacheError(path.string() + ": cache format version " + std::to_string(version) +
                     " is not supported (expected " + std::to_string(kCacheVersion) + ")");
  }
  SampleCache cache;
  const std::uint8_t rep = r.u8();
  if (rep > 1) throw CacheError(path.string() + ": unknown representation tag");
  cache.representation = rep == 0 ? Representation::Cartesian : Representation::Polar;
  cache.class_count = r.u16();
  const std::uint32_t count = r.u32();
  cache.samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ContourSample s;
    s.label = r.u16();
    const std::uint32_t len = r.u32();
    if (r.remaining() / 16 < len) fail(r.offset(), "sample features");
    s.features.resize(len, 2);
    for (std::uint32_t k = 0; k < len; ++k) {
      s.features(k, 0) = r.f64();
      s.features(k, 1) = r.f64();
    }
    s.source_id = i;
    s.representation = cache.representation;
    cache.samples.push_back(std::move(s));
  }
  if (r.remaining() != 0) throw CacheError(path.string() + ": trailing bytes after samples");
  return cache;
}

}  // namespace contourcnn
