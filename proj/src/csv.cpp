#include "nnmrom/csv.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <memory>

#include "nnmrom/errors.hpp"

namespace nnmrom {

std::vector<std::size_t> Dataset::drive_dofs() const {
  return parse_indexed_labels(forcing, 'f');
}

void Dataset::validate() const {
  forcing.validate();
  response.validate();
  if (forcing.steps() != response.steps() || forcing.dt != response.dt)
    throw DimensionMismatch("dataset: forcing and response time bases differ");
  if (velocity.channels != 0 &&
      (velocity.steps() != response.steps() || velocity.channels != response.channels))
    throw DimensionMismatch("dataset: velocity shape does not match response");
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_rows(std::FILE* f, double dt,
                const std::vector<const MultiChannelSeries*>& parts,
                std::size_t steps) {
  std::vector<char> buf;
  buf.reserve(1 << 16);
  char num[32];
  for (std::size_t i = 0; i < steps; ++i) {
    buf.clear();
    const int nt = std::snprintf(num, sizeof num, "%.12e",
                                 static_cast<double>(i) * dt);
    buf.insert(buf.end(), num, num + nt);
    for (const MultiChannelSeries* s : parts) {
      const double* row = s->row(i);
      for (std::size_t c = 0; c < s->channels; ++c) {
        const int n = std::snprintf(num, sizeof num, ",%.12e", row[c]);
        buf.insert(buf.end(), num, num + n);
      }
    }
    buf.push_back('\n');
    if (std::fwrite(buf.data(), 1, buf.size(), f) != buf.size())
      throw IoError("short write while emitting CSV");
  }
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<double> values;  // row-major [rows x cols]
  std::size_t rows = 0, cols = 0;
};

RawTable read_table(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open '" + path + "'");

  RawTable t;
  std::string line;
  line.reserve(4096);
  auto getline = [&](std::string& out) -> bool {
    out.clear();
    int ch;
    while ((ch = std::fgetc(f.get())) != EOF) {
      if (ch == '\n') return true;
      out.push_back(static_cast<char>(ch));
    }
    return !out.empty();
  };

  if (!getline(line)) throw CorruptFile("'" + path + "' is empty");
  std::size_t pos = 0;
  while (pos <= line.size()) {
    const std::size_t comma = line.find(',', pos);
    const std::size_t end = comma == std::string::npos ? line.size() : comma;
    std::string field = line.substr(pos, end - pos);
    if (!field.empty() && field.back() == '\r') field.pop_back();
    t.header.push_back(field);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  t.cols = t.header.size();

  while (getline(line)) {
    if (line.empty()) continue;
    const char* p = line.c_str();
    for (std::size_t c = 0; c < t.cols; ++c) {
      char* endp = nullptr;
      const double v = std::strtod(p, &endp);
      if (endp == p) throw CorruptFile("'" + path + "': malformed number in row " +
                                       std::to_string(t.rows + 2));
      t.values.push_back(v);
      p = endp;
      if (c + 1 < t.cols) {
        if (*p != ',') throw CorruptFile("'" + path + "': expected ',' in row " +
                                         std::to_string(t.rows + 2));
        ++p;
      }
    }
    ++t.rows;
  }
  if (t.rows == 0) throw CorruptFile("'" + path + "' has no data rows");
  return t;
}

double infer_dt(const RawTable& t) {
  if (t.header.empty() || t.header[0] != "t")
    throw CorruptFile("CSV must start with a 't' column");
  if (t.rows < 2) return 1.0;  // single row: dt is unrecoverable, use 1
  const double dt = t.values[t.cols] - t.values[0];
  if (!(dt > 0.0)) throw CorruptFile("CSV time column is not increasing");
  for (std::size_t i = 1; i < t.rows; ++i) {
    const double ti = t.values[i * t.cols];
    const double expect = static_cast<double>(i) * dt;
    if (std::abs(ti - expect) > 1e-6 * std::max(1.0, std::abs(expect)))
      throw CorruptFile("CSV time column is not uniformly sampled");
  }
  return dt;
}

}  // namespace

void write_dataset_csv(const std::string& path, const Dataset& ds) {
  ds.validate();
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot write '" + path + "'");

  std::string header = "t";
  std::vector<const MultiChannelSeries*> parts{&ds.forcing, &ds.response};
  if (ds.velocity.channels != 0) parts.push_back(&ds.velocity);
  for (const MultiChannelSeries* s : parts)
    for (const std::string& l : s->labels) header += "," + l;
  header += "\n";
  if (std::fwrite(header.data(), 1, header.size(), f.get()) != header.size())
    throw IoError("short write while emitting CSV header");

  write_rows(f.get(), ds.response.dt, parts, ds.response.steps());
}

Dataset read_dataset_csv(const std::string& path) {
  const RawTable t = read_table(path);
  const double dt = infer_dt(t);

  Dataset ds;
  struct Part {
    MultiChannelSeries* series;
    std::vector<std::size_t> cols;
  };
  ds.forcing.dt = ds.response.dt = ds.velocity.dt = dt;
  std::vector<Part> parts{{&ds.forcing, {}}, {&ds.response, {}}, {&ds.velocity, {}}};
  for (std::size_t c = 1; c < t.cols; ++c) {
    const std::string& h = t.header[c];
    if (h.empty()) throw CorruptFile("CSV has an empty column label");
    Part* part = nullptr;
    if (h[0] == 'f') part = &parts[0];
    else if (h[0] == 'x') part = &parts[1];
    else if (h[0] == 'v') part = &parts[2];
    else throw CorruptFile("CSV column '" + h + "' is not one of f/x/v");
    part->series->labels.push_back(h);
    part->cols.push_back(c);
  }
  for (Part& p : parts) {
    p.series->channels = p.cols.size();
    p.series->values.resize(t.rows * p.cols.size());
    for (std::size_t i = 0; i < t.rows; ++i) {
      const double* row = t.values.data() + i * t.cols;
      double* dst = p.series->values.data() + i * p.cols.size();
      for (std::size_t c = 0; c < p.cols.size(); ++c) dst[c] = row[p.cols[c]];
    }
  }
  if (ds.forcing.channels == 0 || ds.response.channels == 0)
    throw CorruptFile("dataset CSV needs at least one f and one x column");
  ds.validate();
  return ds;
}

void write_series_csv(const std::string& path, const MultiChannelSeries& s) {
  s.validate();
  if (s.labels.size() != s.channels)
    throw InvalidParams("series CSV requires channel labels");
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot write '" + path + "'");
  std::string header = "t";
  for (const std::string& l : s.labels) header += "," + l;
  header += "\n";
  if (std::fwrite(header.data(), 1, header.size(), f.get()) != header.size())
    throw IoError("short write while emitting CSV header");
  write_rows(f.get(), s.dt, {&s}, s.steps());
}

MultiChannelSeries read_series_csv(const std::string& path) {
  const RawTable t = read_table(path);
  const double dt = infer_dt(t);
  MultiChannelSeries s(dt, t.cols - 1, t.rows);
  s.labels.assign(t.header.begin() + 1, t.header.end());
  for (std::size_t i = 0; i < t.rows; ++i) {
    const double* row = t.values.data() + i * t.cols;
    std::copy(row + 1, row + t.cols, s.row(i));
  }
  return s;
}

}  // namespace nnmrom
