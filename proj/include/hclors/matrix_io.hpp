#pragma once

#include <zlib.h>

#include <Eigen/Core>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hclors/error.hpp"
#include "hclors/types.hpp"

namespace hclors {

// Line-oriented text input. zlib's gz layer reads both gzip-compressed
// and plain files transparently, so one reader covers the ".gz" rule.
class TextLineReader {
 public:
  explicit TextLineReader(const std::string& path) : path_(path), file_(gzopen(path.c_str(), "rb")) {
    if (file_ == nullptr) fail(ErrorKind::io_failure, "cannot open '" + path + "' for reading");
  }
  ~TextLineReader() {
    if (file_ != nullptr) gzclose(file_);
  }
  TextLineReader(const TextLineReader&) = delete;
  TextLineReader& operator=(const TextLineReader&) = delete;

  // Returns false at end of input. Strips the trailing LF / CRLF.
  bool next(std::string& line) {
    line.clear();
    char buf[1 << 16];
    for (;;) {
      if (gzgets(file_, buf, sizeof buf) == nullptr) {
        int errnum = 0;
        gzerror(file_, &errnum);
        if (errnum < 0 && errnum != Z_STREAM_END) {
          fail(ErrorKind::io_failure, "read error in '" + path_ + "'");
        }
        return !line.empty();
      }
      line += buf;
      if (!line.empty() && line.back() == '\n') {
        line.pop_back();
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
      }
    }
  }

 private:
  std::string path_;
  gzFile file_;
};

class TextLineWriter {
 public:
  explicit TextLineWriter(const std::string& path) : path_(path) {
    if (path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
      gz_ = gzopen(path.c_str(), "wb");
      if (gz_ == nullptr) fail(ErrorKind::io_failure, "cannot open '" + path + "' for writing");
    } else {
      plain_ = std::fopen(path.c_str(), "wb");
      if (plain_ == nullptr) fail(ErrorKind::io_failure, "cannot open '" + path + "' for writing");
    }
  }
  ~TextLineWriter() { close_quietly(); }
  TextLineWriter(const TextLineWriter&) = delete;
  TextLineWriter& operator=(const TextLineWriter&) = delete;

  void write(std::string_view text) {
    bool ok;
    if (gz_ != nullptr) {
      ok = text.empty() ||
           gzwrite(gz_, text.data(), static_cast<unsigned>(text.size())) ==
               static_cast<int>(text.size());
    } else {
      ok = std::fwrite(text.data(), 1, text.size(), plain_) == text.size();
    }
    if (!ok) fail(ErrorKind::io_failure, "write error in '" + path_ + "'");
  }

  void write_line(std::string_view text) {
    write(text);
    write("\n");
  }

  void close() {
    bool ok = true;
    if (gz_ != nullptr) {
      ok = gzclose(gz_) == Z_OK;
      gz_ = nullptr;
    } else if (plain_ != nullptr) {
      ok = std::fclose(plain_) == 0;
      plain_ = nullptr;
    }
    if (!ok) fail(ErrorKind::io_failure, "close error in '" + path_ + "'");
  }

 private:
  void close_quietly() noexcept {
    if (gz_ != nullptr) gzclose(gz_);
    if (plain_ != nullptr) std::fclose(plain_);
    gz_ = nullptr;
    plain_ = nullptr;
  }

  std::string path_;
  gzFile gz_ = nullptr;
  std::FILE* plain_ = nullptr;
};

// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string_view> split_tabs(const std::string& line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.emplace_back(line.data() + start, line.size() - start);
      return fields;
    }
    fields.emplace_back(line.data() + start, tab - start);
    start = tab + 1;
  }
}

inline bool is_missing_token(std::string_view s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" || s == "NAN";
}

// Full-field numeric parse; decimal or scientific notation only.
inline double parse_cell(std::string_view field, const std::string& context) {
  if (is_missing_token(field)) {
    fail(ErrorKind::missing_value, "missing value at " + context);
  }
  double value = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    fail(ErrorKind::non_numeric_cell,
         "cannot parse '" + std::string(field) + "' as a number at " + context);
  }
  if (std::isnan(value)) fail(ErrorKind::missing_value, "missing value at " + context);
  if (std::isinf(value)) {
    fail(ErrorKind::non_numeric_cell, "non-finite value at " + context);
  }
  return value;
}

inline std::int64_t parse_integer(std::string_view field, const std::string& context) {
  std::int64_t value = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    fail(ErrorKind::non_integer_position,
         "cannot parse '" + std::string(field) + "' as an integer at " + context);
  }
  return value;
}

inline void check_unique(const std::vector<std::string>& ids, const char* what) {
  std::unordered_set<std::string_view> seen;
  seen.reserve(ids.size());
  for (const std::string& id : ids) {
    if (!seen.insert(id).second) {
      fail(ErrorKind::duplicate_id, std::string(what) + " '" + id + "' appears more than once");
    }
  }
}

inline void check_id_writable(const std::string& id, const char* what) {
  if (id.empty()) fail(ErrorKind::invalid_argument, std::string(what) + " must not be empty");
  if (id.find_first_of("\t\r\n") != std::string::npos) {
    fail(ErrorKind::invalid_argument,
         std::string(what) + " '" + id + "' contains a tab or line break");
  }
}

// Values exactly as laid out in the file: row_ids x col_ids.
struct RawTable {
  std::vector<std::string> col_ids;
  std::vector<std::string> row_ids;
  Eigen::MatrixXd values;
};

inline RawTable load_table(const std::string& path) {
  TextLineReader reader(path);
  std::string line;
  if (!reader.next(line)) {
    fail(ErrorKind::empty_matrix, "'" + path + "' has no header row");
  }
  RawTable table;
  {
    const std::vector<std::string_view> header = split_tabs(line);
    for (std::size_t c = 1; c < header.size(); ++c) {
      if (header[c].empty()) {
        fail(ErrorKind::invalid_argument,
             "empty column id in header of '" + path + "' (column " + std::to_string(c + 1) + ")");
      }
      table.col_ids.emplace_back(header[c]);
    }
  }
  if (table.col_ids.empty()) {
    fail(ErrorKind::empty_matrix, "'" + path + "' declares no data columns");
  }

  std::vector<double> cells;
  std::size_t line_number = 1;
  while (reader.next(line)) {
    ++line_number;
    const std::vector<std::string_view> fields = split_tabs(line);
    if (fields.size() == 1 && fields[0].empty()) continue;  // ignore a blank trailing line
    if (fields.size() != table.col_ids.size() + 1) {
      fail(ErrorKind::dimension_mismatch,
           "'" + path + "' row " + std::to_string(line_number) + " has " +
               std::to_string(fields.size() - 1) + " cells, header declares " +
               std::to_string(table.col_ids.size()));
    }
    if (fields[0].empty()) {
      fail(ErrorKind::invalid_argument,
           "empty row id at '" + path + "' row " + std::to_string(line_number));
    }
    table.row_ids.emplace_back(fields[0]);
    for (std::size_t c = 1; c < fields.size(); ++c) {
      const std::string context = "'" + path + "' row " + std::to_string(line_number) +
                                  " (id '" + table.row_ids.back() + "'), column " +
                                  std::to_string(c) + " (id '" + table.col_ids[c - 1] + "')";
      cells.push_back(parse_cell(fields[c], context));
    }
  }
  if (table.row_ids.empty()) {
    fail(ErrorKind::empty_matrix, "'" + path + "' has no data rows");
  }
  check_unique(table.row_ids, "row id");
  check_unique(table.col_ids, "column id");

  const Eigen::Index rows = static_cast<Eigen::Index>(table.row_ids.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(table.col_ids.size());
  table.values.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      table.values(i, j) = cells[static_cast<std::size_t>(i * cols + j)];
  return table;
}

inline void save_table(const std::string& path, const std::string& corner,
                       const std::vector<std::string>& row_ids,
                       const std::vector<std::string>& col_ids, const Eigen::MatrixXd& values) {
  if (row_ids.empty() || col_ids.empty()) {
    fail(ErrorKind::empty_matrix, "refusing to save an empty matrix to '" + path + "'");
  }
  if (values.rows() != static_cast<Eigen::Index>(row_ids.size()) ||
      values.cols() != static_cast<Eigen::Index>(col_ids.size())) {
    fail(ErrorKind::dimension_mismatch,
         "matrix is " + std::to_string(values.rows()) + "x" + std::to_string(values.cols()) +
             " but has " + std::to_string(row_ids.size()) + " row ids and " +
             std::to_string(col_ids.size()) + " column ids");
  }
  for (const std::string& id : row_ids) check_id_writable(id, "row id");
  for (const std::string& id : col_ids) check_id_writable(id, "column id");
  check_unique(row_ids, "row id");
  check_unique(col_ids, "column id");
  if (!values.allFinite()) {
    fail(ErrorKind::non_finite_input, "matrix for '" + path + "' has NaN or infinite entries");
  }

  TextLineWriter writer(path);
  std::string line = corner;
  for (const std::string& id : col_ids) {
    line += '\t';
    line += id;
  }
  writer.write_line(line);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    line = row_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      line += '\t';
      line += format_double(values(i, j));
    }
    writer.write_line(line);
  }
  writer.close();
}

}  // namespace detail

// Genotype and expression files keep variables (SNPs, probes) in file
// rows and samples in file columns; loading transposes them so the
// in-memory orientation is samples-in-rows. Coefficient files are
// SNPs-in-rows both on disk and in memory.
inline GenotypeMatrix load_genotype(const std::string& path) {
  detail::RawTable t = detail::load_table(path);
  GenotypeMatrix g;
  g.values = t.values.transpose();
  g.snp_ids = std::move(t.row_ids);
  g.sample_ids = std::move(t.col_ids);
  return g;
}

inline ExpressionMatrix load_expression(const std::string& path) {
  detail::RawTable t = detail::load_table(path);
  ExpressionMatrix e;
  e.values = t.values.transpose();
  e.probe_ids = std::move(t.row_ids);
  e.sample_ids = std::move(t.col_ids);
  return e;
}

inline CoefficientMatrix load_coefficients(const std::string& path) {
  detail::RawTable t = detail::load_table(path);
  CoefficientMatrix c;
  c.values = std::move(t.values);
  c.row_ids = std::move(t.row_ids);
  c.col_ids = std::move(t.col_ids);
  return c;
}

inline void save_genotype(const GenotypeMatrix& g, const std::string& path) {
  detail::save_table(path, "id", g.snp_ids, g.sample_ids, g.values.transpose());
}

inline void save_expression(const ExpressionMatrix& e, const std::string& path) {
  detail::save_table(path, "id", e.probe_ids, e.sample_ids, e.values.transpose());
}

inline void save_coefficients(const CoefficientMatrix& c, const std::string& path) {
  detail::save_table(path, "id", c.row_ids, c.col_ids, c.values);
}

// Annotation files: id, chromosome, bp and an optional kind column
// ("snp" or "probe"). Rows without a kind register the id as both a
// SNP position and a probe midpoint. The first line is treated as a
// header and skipped when its bp field is not a plain integer.
inline AnnotationTable load_annotations(const std::string& path) {
  TextLineReader reader(path);
  AnnotationTable table;
  std::string line;
  std::size_t line_number = 0;
  bool first = true;
  while (reader.next(line)) {
    ++line_number;
    const std::vector<std::string_view> fields = detail::split_tabs(line);
    if (fields.size() == 1 && fields[0].empty()) continue;
    const std::string context = "'" + path + "' row " + std::to_string(line_number);

    if (first) {
      first = false;
      std::int64_t probe_value = 0;
      const bool header_like =
          fields.size() < 3 ||
          std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), probe_value)
                  .ptr != fields[2].data() + fields[2].size();
      if (header_like) continue;
    }
    if (fields.size() != 3 && fields.size() != 4) {
      fail(ErrorKind::dimension_mismatch,
           context + " has " + std::to_string(fields.size()) + " columns, expected 3 or 4");
    }
    const std::string id(fields[0]);
    if (id.empty()) fail(ErrorKind::invalid_argument, "empty id at " + context);
    Locus locus;
    locus.chromosome = std::string(fields[1]);
    locus.bp = detail::parse_integer(fields[2], context);
    if (locus.bp < 0) {
      fail(ErrorKind::negative_position,
           "position " + std::to_string(locus.bp) + " for id '" + id + "' at " + context);
    }

    bool as_snp = true;
    bool as_probe = true;
    if (fields.size() == 4) {
      if (fields[3] == "snp") {
        as_probe = false;
      } else if (fields[3] == "probe") {
        as_snp = false;
      } else {
        fail(ErrorKind::invalid_argument,
             "kind '" + std::string(fields[3]) + "' at " + context + " (expected snp or probe)");
      }
    }
    if (as_snp && !table.snp_positions.emplace(id, locus).second) {
      fail(ErrorKind::duplicate_id, "SNP id '" + id + "' appears more than once in '" + path + "'");
    }
    if (as_probe && !table.probe_midpoints.emplace(id, locus).second) {
      fail(ErrorKind::duplicate_id,
           "probe id '" + id + "' appears more than once in '" + path + "'");
    }
  }
  return table;
}

// Two tab-separated columns per line, snp_id then probe id; no header.
inline std::vector<std::pair<std::string, std::string>> load_known_pairs(
    const std::string& path) {
  TextLineReader reader(path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t line_number = 0;
  while (reader.next(line)) {
    ++line_number;
    const std::vector<std::string_view> fields = detail::split_tabs(line);
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != 2) {
      fail(ErrorKind::dimension_mismatch, "'" + path + "' row " + std::to_string(line_number) +
                                              " has " + std::to_string(fields.size()) +
                                              " columns, expected 2");
    }
    pairs.emplace_back(std::string(fields[0]), std::string(fields[1]));
  }
  return pairs;
}

}  // namespace hclors
