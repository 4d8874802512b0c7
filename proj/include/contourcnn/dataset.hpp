#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "contourcnn/contour.hpp"
#include "contourcnn/tensor.hpp"

namespace contourcnn {

enum class Representation { Cartesian, Polar };
enum class Subset { Digits, UppercaseLetters, Synthetic };

std::string_view to_string(Representation r);
Representation parse_representation(std::string_view s);
std::string_view to_string(Subset s);
/// "digits", "letters", "synthetic".
Subset parse_subset(std::string_view s);

/// One encoded contour. features is N x 2: (x, y) or (alpha, L).
struct ContourSample {
  Matrix features;
  Index label = 0;
  Index source_id = 0;
  Representation representation = Representation::Cartesian;
};

/// Class names used for CSV headers: digits, letters, synthetic shapes,
/// otherwise the class indices.
std::vector<std::string> class_names(Index class_count);

/// Empty if the sample meets the N >= 3, label and value-range invariants.
std::string validate_sample(const ContourSample& sample, Index class_count);

ContourSample make_sample(const ContourPoints& contour, Index label, Index source_id,
                          Representation representation);

// --- IDX ingestion -----------------------------------------------------------

struct IdxData {
  std::vector<GrayImage> images;
  std::vector<int> labels;
};

/// Reads an IDX image/label pair (gzip-compressed or plain). Images are
/// transposed on load when `transpose` is set, which EMNIST requires.
/// Throws IngestionError with the byte offset of the first problem.
IdxData read_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, bool transpose = true);

/// Keeps the images belonging to `subset` and remaps labels to 0-based
/// class indices. Digits keep labels 0-9. Letters accept the EMNIST letters
/// split (1-26) or by-class numbering (uppercase 10-35). Returns the number
/// of images filtered out.
Index select_subset(IdxData& data, Subset subset);

// --- Contour dataset ---------------------------------------------------------

struct DropReport {
  std::map<std::string, Index> counts;  // reason -> images dropped
  Index total() const;
};

struct BuildResult {
  std::vector<ContourSample> samples;
  DropReport drops;
};

/// binarize -> trace_outer_contour -> encode for every image. Per-image
/// failures land in the drop report. Sample order follows image order.
BuildResult build_contour_dataset(const IdxData& data, Representation representation,
                                  int threshold = 128, Index min_length = 3,
                                  unsigned workers = 1);

inline constexpr Index kSyntheticClasses = 3;  // circle, square, triangle

/// Filled polygon raster of one synthetic shape (28 x 28, foreground 255).
/// Corners are at `radius` from `centre`; every boundary sample is pushed
/// radially by up to noise * radius.
GrayImage render_shape(Index shape_class, const Eigen::Vector2d& centre, double radius,
                       double rotation, double noise, std::uint64_t jitter_seed);

/// per_class random circles, squares and triangles run through the standard
/// pipeline. Labels cycle 0,1,2,0,1,2,... Deterministic given seed.
std::vector<ContourSample> synthetic_shapes(Index per_class, double noise, std::uint64_t seed,
                                            Representation representation = Representation::Cartesian,
                                            int threshold = 128);

// --- Cache -------------------------------------------------------------------

inline constexpr std::uint16_t kCacheVersion = 1;

struct SampleCache {
  Representation representation = Representation::Cartesian;
  Index class_count = 0;
  std::vector<ContourSample> samples;
};

/// Binary "CCNT" container terminated by a CRC32 of all preceding bytes.
/// Source ids are not stored; cache_read numbers samples by position.
void cache_write(const SampleCache& cache, const std::filesystem::path& path);
SampleCache cache_read(const std::filesystem::path& path);

}  // namespace contourcnn
