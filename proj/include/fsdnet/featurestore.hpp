#pragma once

// Raw CSV ingestion, per-field vocabularies with frequency thresholding,
// numeric discretization, seeded splits and label-noise injection.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsdnet/common.hpp"

namespace fsdnet::featurestore {

using nlohmann::json;

inline constexpr std::string_view kOovToken = "__OOV__";
inline constexpr std::string_view kMissingToken = "__MISSING__";
inline constexpr std::uint32_t kOovIndex = 0;
inline constexpr int kEncodedFormatVersion = 1;

enum class FieldKind { categorical, numeric };

std::string_view to_string(FieldKind kind);
FieldKind parse_field_kind(std::string_view text);

struct FieldSchema {
  std::string name;
  FieldKind kind = FieldKind::categorical;
  std::size_t field_index = 0;
};

// Ordered field list plus the name of the label column.
struct Schema {
  std::vector<FieldSchema> fields;
  std::string label = "label";

  std::size_t field_count() const { return fields.size(); }
  // Throws ConfigError on duplicate names or a non-contiguous field_index range.
  void validate() const;

  static Schema from_json(const json& doc);
  static Schema load(const std::filesystem::path& path);
  json to_json() const;
};

// Base of the logarithm used by discretize_numeric; natural log by default.
struct LogBase {
  double base = 0.0;  // <= 0 means e
  double log(double x) const;
  std::string describe() const;
};

// floor(log(x)^2) for x > 2, 1 otherwise. Throws IngestionError on NaN/Inf.
std::int64_t discretize_numeric(double x, LogBase base = {});
// Token form: the integer bucket as text, or kMissingToken when absent.
std::string numeric_token(std::optional<double> x, LogBase base = {});

// One ingested record after tokenization (numeric fields discretized,
// empty cells replaced by kMissingToken). row_number is 1-based over data rows.
struct TokenRow {
  std::size_t row_number = 0;
  std::vector<std::string> tokens;
  std::uint8_t label = 0;
};

struct CsvOptions {
  char delimiter = '\0';  // '\0' picks tab for .tsv/.txt files, comma otherwise
  LogBase log_base;
};

// Reads a headered CSV/TSV file. Every schema field and the label must be
// present as columns; rows with too few cells raise IngestionError naming the
// row and field.
std::vector<TokenRow> read_csv(const std::filesystem::path& path,
                               const Schema& schema, const CsvOptions& options = {});
std::vector<TokenRow> parse_csv(std::string_view text, const Schema& schema,
                                const CsvOptions& options = {});

class FieldVocabulary {
 public:
  FieldVocabulary() = default;
  FieldVocabulary(std::size_t field_index, std::uint64_t min_count,
                  std::vector<std::string> tokens, std::vector<std::uint64_t> counts);

  std::size_t field_index() const { return field_index_; }
  std::uint64_t min_count() const { return min_count_; }
  std::uint32_t size() const { return static_cast<std::uint32_t>(tokens_.size()); }
  std::uint32_t oov_index() const { return kOovIndex; }
  // Index order; tokens()[0] is the OOV token.
  const std::vector<std::string>& tokens() const { return tokens_; }
  // Training-set frequency per index; counts()[0] is the mass folded into OOV.
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  std::uint32_t encode(std::string_view token) const;
  bool contains(std::string_view token) const;

 private:
  std::size_t field_index_ = 0;
  std::uint64_t min_count_ = 1;
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, std::uint32_t> lookup_;
};

// One vocabulary per schema field. Tokens with frequency >= min_count are
// kept, ordered by descending frequency then lexicographically; index 0 is OOV.
std::vector<FieldVocabulary> build_vocabulary(std::span<const TokenRow> rows,
                                              const Schema& schema,
                                              std::uint64_t min_count);

json vocabulary_to_json(std::span<const FieldVocabulary> vocabs, const Schema& schema);
std::vector<FieldVocabulary> vocabulary_from_json(const json& doc);

struct EncodedSample {
  std::vector<std::uint32_t> indices;
  std::uint8_t label = 0;
};

// Row-major flat storage of encoded samples.
class EncodedDataset {
 public:
  EncodedDataset() = default;
  explicit EncodedDataset(std::size_t field_count) : field_count_(field_count) {}

  std::size_t field_count() const { return field_count_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  void reserve(std::size_t rows);
  void push_back(std::span<const std::uint32_t> indices, std::uint8_t label);
  void push_back(const EncodedSample& sample) { push_back(sample.indices, sample.label); }

  std::span<const std::uint32_t> indices(std::size_t row) const {
    return {indices_.data() + row * field_count_, field_count_};
  }
  std::uint8_t label(std::size_t row) const { return labels_[row]; }
  void set_label(std::size_t row, std::uint8_t label) { labels_[row] = label; }
  EncodedSample sample(std::size_t row) const;

  std::span<const std::uint32_t> all_indices() const { return indices_; }
  std::span<const std::uint8_t> labels() const { return labels_; }
  std::size_t positives() const;

  // Rows in the given order.
  EncodedDataset select(std::span<const std::size_t> rows) const;

  bool operator==(const EncodedDataset&) const = default;

 private:
  std::size_t field_count_ = 0;
  std::vector<std::uint32_t> indices_;
  std::vector<std::uint8_t> labels_;
};

EncodedDataset encode_rows(std::span<const TokenRow> rows,
                           std::span<const FieldVocabulary> vocabs);

struct SplitRatio {
  std::array<std::uint32_t, 3> parts{8, 1, 1};

  // "8:1:1"; throws ConfigError on malformed input or a zero part.
  static SplitRatio parse(std::string_view text);
  std::string to_string() const;
  void validate() const;
};

// Sizes for n items: the first two parts are rounded to nearest, the test part
// takes the remainder.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatio& ratio);

// Seeded shuffle of 0..n-1 partitioned contiguously by ratio.
std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n, const SplitRatio& ratio,
                                                      std::uint64_t seed);

struct DatasetSplit {
  EncodedDataset train;
  EncodedDataset validation;
  EncodedDataset test;
  SplitRatio ratio;
  std::uint64_t seed = 0;
};

DatasetSplit split_dataset(const EncodedDataset& samples, const SplitRatio& ratio,
                           std::uint64_t seed);

// Flips exactly round(fraction * N) distinct labels chosen by seeded sampling
// without replacement.
EncodedDataset inject_label_noise(const EncodedDataset& train, double fraction,
                                  std::uint64_t seed);

// Binary record file (u32 LE indices per field + u8 label per row) plus a JSON
// sidecar next to it (<stem>.json).
void write_encoded(const std::filesystem::path& bin_path, const EncodedDataset& data,
                   json extra_meta = json::object());
EncodedDataset read_encoded(const std::filesystem::path& bin_path);
json read_encoded_meta(const std::filesystem::path& bin_path);

// A prepared dataset directory produced by `prepare`.
struct PreparedDataset {
  Schema schema;
  std::vector<FieldVocabulary> vocabs;
  EncodedDataset train;
  EncodedDataset validation;
  EncodedDataset test;

  std::vector<std::uint32_t> vocab_sizes() const;
  const EncodedDataset& split(std::string_view name) const;
};

PreparedDataset load_prepared(const std::filesystem::path& dir);

}  // namespace fsdnet::featurestore
