#include "fsdnet/featurestore.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fsdnet/rng.hpp"

namespace fsdnet::featurestore {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

std::string_view to_string(FieldKind kind) {
  return kind == FieldKind::numeric ? "numeric" : "categorical";
}

FieldKind parse_field_kind(std::string_view text) {
  if (text == "categorical") return FieldKind::categorical;
  if (text == "numeric") return FieldKind::numeric;
  throw ConfigError("unknown field kind '" + std::string(text) + "'");
}

void Schema::validate() const {
  if (fields.empty()) throw ConfigError("schema declares no fields");
  std::set<std::string> names;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (!names.insert(fields[i].name).second) {
      throw ConfigError("duplicate field name '" + fields[i].name + "' in schema");
    }
    if (fields[i].field_index != i) {
      throw ConfigError("field '" + fields[i].name + "' has field_index " +
                        std::to_string(fields[i].field_index) + ", expected " +
                        std::to_string(i));
    }
  }
  if (names.contains(label)) {
    throw ConfigError("label column '" + label + "' is also declared as a field");
  }
}

Schema Schema::from_json(const json& doc) {
  Schema schema;
  if (doc.contains("label")) schema.label = doc.at("label").get<std::string>();
  const auto& fields = doc.at("fields");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    FieldSchema field;
    field.name = fields[i].at("name").get<std::string>();
    field.kind = parse_field_kind(fields[i].value("kind", std::string("categorical")));
    field.field_index = fields[i].value("field_index", i);
    schema.fields.push_back(std::move(field));
  }
  schema.validate();
  return schema;
}

Schema Schema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open schema file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed schema file " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

json Schema::to_json() const {
  json doc;
  doc["label"] = label;
  doc["fields"] = json::array();
  for (const auto& field : fields) {
    doc["fields"].push_back({{"name", field.name},
                             {"kind", std::string(featurestore::to_string(field.kind))},
                             {"field_index", field.field_index}});
  }
  return doc;
}

double LogBase::log(double x) const {
  if (base <= 0.0) return std::log(x);
  // exact powers should land on integer buckets
  if (base == 10.0) return std::log10(x);
  if (base == 2.0) return std::log2(x);
  return std::log(x) / std::log(base);
}

std::string LogBase::describe() const {
  if (base <= 0.0) return "e";
  std::ostringstream out;
  out << base;
  return out.str();
}

std::int64_t discretize_numeric(double x, LogBase base) {
  if (!std::isfinite(x)) throw IngestionError("non-finite numeric value");
  if (x <= 2.0) return 1;
  const double l = base.log(x);
  return static_cast<std::int64_t>(std::floor(l * l));
}

std::string numeric_token(std::optional<double> x, LogBase base) {
  if (!x) return std::string(kMissingToken);
  return std::to_string(discretize_numeric(*x, base));
}

namespace {

std::vector<std::string> split_line(std::string_view line, char delimiter) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"' && cell.empty()) {
      quoted = true;
    } else if (c == delimiter) {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    // from_chars rejects "inf"/"nan"; strtod accepts them so they reach the
    // non-finite check in discretize_numeric.
    const std::string copy(text);
    char* end = nullptr;
    value = std::strtod(copy.c_str(), &end);
    if (end != copy.c_str() + copy.size()) {
      throw IngestionError("'" + copy + "' is not a number");
    }
  }
  return value;
}

std::uint8_t parse_label(std::string_view text, std::size_t row) {
  const auto value = parse_double(text);
  if (value && (*value == 0.0 || *value == 1.0)) return static_cast<std::uint8_t>(*value);
  throw IngestionError("row " + std::to_string(row) + ": label '" + std::string(text) +
                       "' is not 0 or 1");
}

}  // namespace

std::vector<TokenRow> parse_csv(std::string_view text, const Schema& schema,
                                const CsvOptions& options) {
  schema.validate();
  const char delimiter = options.delimiter == '\0' ? ',' : options.delimiter;

  std::vector<TokenRow> rows;
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    const std::size_t end = text.find('\n', pos);
    line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() : end + 1;
    return true;
  };

  std::string_view line;
  if (!next_line(line)) throw IngestionError("input has no header row");
  const auto header = split_line(trim(line), delimiter);
  std::map<std::string, std::size_t> column_of;
  for (std::size_t c = 0; c < header.size(); ++c) column_of[std::string(trim(header[c]))] = c;

  std::vector<std::size_t> field_columns;
  for (const auto& field : schema.fields) {
    const auto it = column_of.find(field.name);
    if (it == column_of.end()) {
      throw IngestionError("header has no column for field '" + field.name + "'");
    }
    field_columns.push_back(it->second);
  }
  const auto label_it = column_of.find(schema.label);
  if (label_it == column_of.end()) {
    throw IngestionError("header has no label column '" + schema.label + "'");
  }
  const std::size_t label_column = label_it->second;

  std::size_t row_number = 0;
  while (next_line(line)) {
    if (trim(line).empty()) continue;
    ++row_number;
    const auto cells = split_line(line, delimiter);
    TokenRow row;
    row.row_number = row_number;
    row.tokens.reserve(schema.field_count());
    for (std::size_t f = 0; f < schema.field_count(); ++f) {
      const auto& field = schema.fields[f];
      if (field_columns[f] >= cells.size()) {
        throw IngestionError("row " + std::to_string(row_number) + ": missing value for field '" +
                             field.name + "'");
      }
      const std::string_view cell = trim(cells[field_columns[f]]);
      if (field.kind == FieldKind::numeric) {
        try {
          row.tokens.push_back(numeric_token(parse_double(cell), options.log_base));
        } catch (const IngestionError& e) {
          throw IngestionError("row " + std::to_string(row_number) + ", field '" + field.name +
                               "': " + e.what());
        }
      } else {
        row.tokens.push_back(cell.empty() ? std::string(kMissingToken) : std::string(cell));
      }
    }
    if (label_column >= cells.size()) {
      throw IngestionError("row " + std::to_string(row_number) + ": missing value for label '" +
                           schema.label + "'");
    }
    row.label = parse_label(cells[label_column], row_number);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<TokenRow> read_csv(const std::filesystem::path& path, const Schema& schema,
                               const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open input file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  CsvOptions resolved = options;
  if (resolved.delimiter == '\0') {
    const auto ext = path.extension().string();
    resolved.delimiter = (ext == ".tsv" || ext == ".txt") ? '\t' : ',';
  }
  return parse_csv(buffer.str(), schema, resolved);
}

FieldVocabulary::FieldVocabulary(std::size_t field_index, std::uint64_t min_count,
                                 std::vector<std::string> tokens,
                                 std::vector<std::uint64_t> counts)
    : field_index_(field_index),
      min_count_(min_count),
      tokens_(std::move(tokens)),
      counts_(std::move(counts)) {
  if (tokens_.empty() || tokens_.front() != kOovToken) {
    throw ConfigError("vocabulary must start with the OOV token");
  }
  if (counts_.size() != tokens_.size()) {
    throw ConfigError("vocabulary token and count arrays differ in length");
  }
  for (std::uint32_t i = 1; i < tokens_.size(); ++i) {
    if (!lookup_.emplace(tokens_[i], i).second) {
      throw ConfigError("duplicate token '" + tokens_[i] + "' in vocabulary");
    }
  }
}

std::uint32_t FieldVocabulary::encode(std::string_view token) const {
  const auto it = lookup_.find(std::string(token));
  return it == lookup_.end() ? kOovIndex : it->second;
}

bool FieldVocabulary::contains(std::string_view token) const {
  return lookup_.contains(std::string(token));
}

std::vector<FieldVocabulary> build_vocabulary(std::span<const TokenRow> rows,
                                              const Schema& schema,
                                              std::uint64_t min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  const std::size_t f = schema.field_count();
  std::vector<std::unordered_map<std::string, std::uint64_t>> counts(f);
  for (const auto& row : rows) {
    if (row.tokens.size() < f) {
      throw IngestionError("row " + std::to_string(row.row_number) + ": missing value for field '" +
                           schema.fields[row.tokens.size()].name + "'");
    }
    for (std::size_t i = 0; i < f; ++i) ++counts[i][row.tokens[i]];
  }

  std::vector<FieldVocabulary> vocabs;
  vocabs.reserve(f);
  for (std::size_t i = 0; i < f; ++i) {
    std::vector<std::pair<std::string, std::uint64_t>> kept;
    std::uint64_t folded = 0;
    for (const auto& [token, count] : counts[i]) {
      if (count >= min_count) {
        kept.emplace_back(token, count);
      } else {
        folded += count;
      }
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::vector<std::string> tokens{std::string(kOovToken)};
    std::vector<std::uint64_t> token_counts{folded};
    for (auto& [token, count] : kept) {
      tokens.push_back(std::move(token));
      token_counts.push_back(count);
    }
    vocabs.emplace_back(i, min_count, std::move(tokens), std::move(token_counts));
  }
  return vocabs;
}

json vocabulary_to_json(std::span<const FieldVocabulary> vocabs, const Schema& schema) {
  json doc;
  doc["min_count"] = vocabs.empty() ? 1 : vocabs.front().min_count();
  doc["oov_index"] = kOovIndex;
  doc["oov_token"] = kOovToken;
  doc["missing_token"] = kMissingToken;
  doc["fields"] = json::array();
  for (const auto& vocab : vocabs) {
    const auto& field = schema.fields.at(vocab.field_index());
    doc["fields"].push_back({{"name", field.name},
                             {"kind", std::string(to_string(field.kind))},
                             {"field_index", vocab.field_index()},
                             {"tokens", vocab.tokens()},
                             {"counts", vocab.counts()}});
  }
  return doc;
}

std::vector<FieldVocabulary> vocabulary_from_json(const json& doc) {
  const auto min_count = doc.at("min_count").get<std::uint64_t>();
  std::vector<FieldVocabulary> vocabs;
  for (const auto& field : doc.at("fields")) {
    vocabs.emplace_back(field.at("field_index").get<std::size_t>(), min_count,
                        field.at("tokens").get<std::vector<std::string>>(),
                        field.at("counts").get<std::vector<std::uint64_t>>());
  }
  return vocabs;
}

void EncodedDataset::reserve(std::size_t rows) {
  indices_.reserve(rows * field_count_);
  labels_.reserve(rows);
}

void EncodedDataset::push_back(std::span<const std::uint32_t> indices, std::uint8_t label) {
  if (indices.size() != field_count_) {
    throw ShapeError("sample has " + std::to_string(indices.size()) + " indices, expected " +
                     std::to_string(field_count_));
  }
  if (label > 1) throw IngestionError("label must be 0 or 1");
  indices_.insert(indices_.end(), indices.begin(), indices.end());
  labels_.push_back(label);
}

EncodedSample EncodedDataset::sample(std::size_t row) const {
  const auto idx = indices(row);
  return {{idx.begin(), idx.end()}, labels_[row]};
}

std::size_t EncodedDataset::positives() const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), std::uint8_t{1}));
}

EncodedDataset EncodedDataset::select(std::span<const std::size_t> rows) const {
  EncodedDataset out(field_count_);
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(indices(r), labels_[r]);
  return out;
}

EncodedDataset encode_rows(std::span<const TokenRow> rows,
                           std::span<const FieldVocabulary> vocabs) {
  EncodedDataset out(vocabs.size());
  out.reserve(rows.size());
  std::vector<std::uint32_t> indices(vocabs.size());
  for (const auto& row : rows) {
    if (row.tokens.size() != vocabs.size()) {
      throw IngestionError("row " + std::to_string(row.row_number) + " has " +
                           std::to_string(row.tokens.size()) + " tokens, expected " +
                           std::to_string(vocabs.size()));
    }
    for (std::size_t f = 0; f < vocabs.size(); ++f) indices[f] = vocabs[f].encode(row.tokens[f]);
    out.push_back(indices, row.label);
  }
  return out;
}

SplitRatio SplitRatio::parse(std::string_view text) {
  SplitRatio ratio;
  std::size_t part = 0;
  std::size_t start = 0;
  while (true) {
    const std::size_t colon = text.find(':', start);
    const std::string_view piece =
        text.substr(start, colon == std::string_view::npos ? std::string_view::npos : colon - start);
    if (part >= 3) throw ConfigError("split ratio '" + std::string(text) + "' has more than 3 parts");
    std::uint32_t value = 0;
    const auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), value);
    if (ec != std::errc() || ptr != piece.data() + piece.size() || piece.empty()) {
      throw ConfigError("malformed split ratio '" + std::string(text) + "'");
    }
    ratio.parts[part++] = value;
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  if (part != 3) throw ConfigError("split ratio '" + std::string(text) + "' needs 3 parts");
  ratio.validate();
  return ratio;
}

std::string SplitRatio::to_string() const {
  return std::to_string(parts[0]) + ":" + std::to_string(parts[1]) + ":" +
         std::to_string(parts[2]);
}

void SplitRatio::validate() const {
  for (auto p : parts) {
    if (p == 0) throw ConfigError("split ratio " + to_string() + " has a zero part");
  }
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatio& ratio) {
  ratio.validate();
  const double total =
      static_cast<double>(ratio.parts[0]) + ratio.parts[1] + ratio.parts[2];
  auto part = [&](int k) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio.parts[k] / total));
  };
  const std::size_t train = std::min(part(0), n);
  const std::size_t valid = std::min(part(1), n - train);
  return {train, valid, n - train - valid};
}

std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n, const SplitRatio& ratio,
                                                      std::uint64_t seed) {
  const auto sizes = split_sizes(n, ratio);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::array<std::vector<std::size_t>, 3> parts;
  auto it = order.begin();
  for (int k = 0; k < 3; ++k) {
    parts[k].assign(it, it + static_cast<std::ptrdiff_t>(sizes[k]));
    it += static_cast<std::ptrdiff_t>(sizes[k]);
  }
  return parts;
}

DatasetSplit split_dataset(const EncodedDataset& samples, const SplitRatio& ratio,
                           std::uint64_t seed) {
  ratio.validate();
  if (samples.size() < 3) throw ConfigError("need at least 3 samples to split");
  const auto parts = split_indices(samples.size(), ratio, seed);
  return {samples.select(parts[0]), samples.select(parts[1]), samples.select(parts[2]), ratio,
          seed};
}

EncodedDataset inject_label_noise(const EncodedDataset& train, double fraction,
                                  std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ConfigError("noise fraction must lie in [0, 1]");
  }
  EncodedDataset out = train;
  const std::size_t n = train.size();
  const auto flips = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  // Partial Fisher-Yates: the first `flips` slots are a uniform sample
  // without replacement.
  Rng rng(seed);
  for (std::size_t i = 0; i < flips; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(order[i], order[j]);
    out.set_label(order[i], static_cast<std::uint8_t>(1 - out.label(order[i])));
  }
  return out;
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& bin_path) {
  auto path = bin_path;
  path.replace_extension(".json");
  return path;
}

}  // namespace

void write_encoded(const std::filesystem::path& bin_path, const EncodedDataset& data,
                   json extra_meta) {
  {
    std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestionError("cannot write " + bin_path.string());
    for (std::size_t r = 0; r < data.size(); ++r) {
      const auto idx = data.indices(r);
      out.write(reinterpret_cast<const char*>(idx.data()),
                static_cast<std::streamsize>(idx.size() * sizeof(std::uint32_t)));
      const char label = static_cast<char>(data.label(r));
      out.write(&label, 1);
    }
  }
  json meta = std::move(extra_meta);
  meta["format"] = "fsdnet-encoded";
  meta["format_version"] = kEncodedFormatVersion;
  meta["field_count"] = data.field_count();
  meta["row_count"] = data.size();
  meta["positives"] = data.positives();
  std::ofstream side(sidecar_path(bin_path), std::ios::trunc);
  side << meta.dump(2) << '\n';
}

json read_encoded_meta(const std::filesystem::path& bin_path) {
  std::ifstream side(sidecar_path(bin_path));
  if (!side) throw IngestionError("missing sidecar for " + bin_path.string());
  json meta = json::parse(side);
  if (meta.value("format_version", 0) != kEncodedFormatVersion) {
    throw IngestionError("unsupported encoded format version in " +
                         sidecar_path(bin_path).string());
  }
  return meta;
}

EncodedDataset read_encoded(const std::filesystem::path& bin_path) {
  const json meta = read_encoded_meta(bin_path);
  const auto fields = meta.at("field_count").get<std::size_t>();
  const auto rows = meta.at("row_count").get<std::size_t>();
  const std::size_t record = fields * sizeof(std::uint32_t) + 1;
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + bin_path.string());
  if (std::filesystem::file_size(bin_path) != rows * record) {
    throw IngestionError(bin_path.string() + " size does not match its sidecar");
  }
  EncodedDataset data(fields);
  data.reserve(rows);
  std::vector<std::uint32_t> indices(fields);
  for (std::size_t r = 0; r < rows; ++r) {
    char label = 0;
    in.read(reinterpret_cast<char*>(indices.data()),
            static_cast<std::streamsize>(fields * sizeof(std::uint32_t)));
    in.read(&label, 1);
    data.push_back(indices, static_cast<std::uint8_t>(label));
  }
  return data;
}

std::vector<std::uint32_t> PreparedDataset::vocab_sizes() const {
  std::vector<std::uint32_t> sizes;
  for (const auto& v : vocabs) sizes.push_back(v.size());
  return sizes;
}

const EncodedDataset& PreparedDataset::split(std::string_view name) const {
  if (name == "train") return train;
  if (name == "validation" || name == "valid" || name == "val") return validation;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

PreparedDataset load_prepared(const std::filesystem::path& dir) {
  PreparedDataset data;
  data.schema = Schema::load(dir / "schema.json");
  std::ifstream vin(dir / "vocab.json");
  if (!vin) throw IngestionError("missing vocab.json in " + dir.string());
  data.vocabs = vocabulary_from_json(json::parse(vin));
  data.train = read_encoded(dir / "train.bin");
  data.validation = read_encoded(dir / "validation.bin");
  data.test = read_encoded(dir / "test.bin");
  const auto sizes = data.vocab_sizes();
  for (const auto* split : {&data.train, &data.validation, &data.test}) {
    if (split->field_count() != sizes.size()) {
      throw IngestionError("encoded split field count does not match vocabulary in " + dir.string());
    }
    const auto all = split->all_indices();
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (all[i] >= sizes[i % sizes.size()]) {
        throw LookupError("encoded index out of vocabulary range in " + dir.string());
      }
    }
  }
  return data;
}

}  // namespace fsdnet::featurestore
