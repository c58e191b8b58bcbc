#include "t1noise/csv_io.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>
#include <unistd.h>

#include "t1noise/errors.hpp"

namespace t1noise::io {

namespace fs = std::filesystem;

namespace {

struct Cell {
  std::string text;
  std::size_t row = 0;
  std::size_t column = 0;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Header must start with `required`, optionally followed by a prefix of
// `optional`.
Table parse_table(std::string_view text, const std::string& source,
                  const std::vector<std::string>& required, const std::vector<std::string>& optional) {
  Table t;
  std::size_t row = 0;
  std::size_t start = 0;
  bool have_header = false;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const std::string_view raw = text.substr(start, nl == std::string_view::npos ? nl : nl - start);
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++row;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line);
    if (!have_header) {
      have_header = true;
      if (fields.size() < required.size() || fields.size() > required.size() + optional.size()) {
        throw ParseError(source, row, 1,
                         fmt::format("expected {} to {} columns, got {}", required.size(),
                                     required.size() + optional.size(), fields.size()));
      }
      for (std::size_t c = 0; c < fields.size(); ++c) {
        const std::string& want = c < required.size() ? required[c] : optional[c - required.size()];
        if (fields[c] != want) {
          throw ParseError(source, row, c + 1,
                           fmt::format("column '{}' should be '{}'", fields[c], want));
        }
        t.header.emplace_back(fields[c]);
      }
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw ParseError(source, row, std::min(fields.size(), t.header.size()) + 1,
                       fmt::format("expected {} fields, got {}", t.header.size(), fields.size()));
    }
    std::vector<Cell> cells;
    for (std::size_t c = 0; c < fields.size(); ++c) cells.push_back({std::string(fields[c]), row, c + 1});
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw ParseError(source, row, 1, "missing header row");
  return t;
}

double to_double(const Cell& cell, const std::string& source) {
  double v = 0.0;
  const char* b = cell.text.data();
  const char* e = b + cell.text.size();
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || cell.text.empty()) {
    throw ParseError(source, cell.row, cell.column, fmt::format("'{}' is not a number", cell.text));
  }
  return v;
}

std::vector<double> column(const Table& t, std::size_t c, const std::string& source) {
  std::vector<double> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) out.push_back(to_double(r[c], source));
  return out;
}

}  // namespace

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::decay: return "decay";
    case DatasetKind::profile: return "profile";
    case DatasetKind::spectrum: return "spectrum";
    case DatasetKind::fieldmap: return "fieldmap";
  }
  return "unknown";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
  for (auto k : {DatasetKind::decay, DatasetKind::profile, DatasetKind::spectrum,
                 DatasetKind::fieldmap}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown dataset kind '" + s + "'");
}

DecayCurve parse_decay_csv(std::string_view text, const std::string& source) {
  const Table t = parse_table(text, source, {"t_s", "signal"}, {"sigma"});
  DecayCurve c;
  c.times_s = column(t, 0, source);
  c.signals = column(t, 1, source);
  if (t.header.size() > 2) c.sigma = column(t, 2, source);
  c.validate();
  return c;
}

RelaxometryProfile parse_profile_csv(std::string_view text, const std::string& source) {
  const Table t = parse_table(text, source, {"B_T", "R1_per_s"}, {"err", "provenance"});
  RelaxometryProfile p;
  p.fields_t = column(t, 0, source);
  p.rates_per_s = column(t, 1, source);
  if (t.header.size() > 2) p.rate_errors = column(t, 2, source);
  if (t.header.size() > 3) {
    for (const auto& r : t.rows) {
      try {
        p.provenance.push_back(provenance_from_string(r[3].text));
      } catch (const ValidationError& e) {
        throw ParseError(source, r[3].row, r[3].column, e.what());
      }
    }
  }
  p.validate();
  return p;
}

EprSpectrum parse_spectrum_csv(std::string_view text, const std::string& source) {
  const Table t = parse_table(text, source, {"field_G", "signal"}, {});
  EprSpectrum s;
  s.field_g = column(t, 0, source);
  s.signal = column(t, 1, source);
  s.validate();
  return s;
}

acq::FieldMap parse_fieldmap_csv(std::string_view text, const std::string& source) {
  const Table t = parse_table(text, source, {"position_mm", "field_T"}, {});
  return acq::FieldMap(column(t, 0, source), column(t, 1, source));
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view content) {
  const fs::path tmp = path.string() + fmt::format(".tmp{}", static_cast<long>(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into '" + path.string() + "'");
  }
}

Dataset ingest_dataset(const fs::path& path, DatasetKind kind) {
  const std::string text = read_text_file(path);
  const std::string src = path.string();
  switch (kind) {
    case DatasetKind::decay: return parse_decay_csv(text, src);
    case DatasetKind::profile: return parse_profile_csv(text, src);
    case DatasetKind::spectrum: return parse_spectrum_csv(text, src);
    case DatasetKind::fieldmap: return parse_fieldmap_csv(text, src);
  }
  throw ValidationError("unknown dataset kind");
}

std::string format_number(double v) { return fmt::format("{}", v); }

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::row(const std::vector<double>& values) {
  if (values.size() != header_.size()) throw ValidationError("row width does not match header");
  std::string line;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) line += ',';
    line += format_number(values[i]);
  }
  rows_.push_back(std::move(line));
  return *this;
}

CsvTable& CsvTable::row(const std::vector<std::variant<double, std::string>>& cells) {
  if (cells.size() != header_.size()) throw ValidationError("row width does not match header");
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    if (const double* d = std::get_if<double>(&cells[i])) {
      line += format_number(*d);
    } else {
      line += std::get<std::string>(cells[i]);
    }
  }
  rows_.push_back(std::move(line));
  return *this;
}

std::string CsvTable::str() const {
  std::string out;
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (i) out += ',';
    out += header_[i];
  }
  out += '\n';
  for (const auto& r : rows_) {
    out += r;
    out += '\n';
  }
  return out;
}

std::string decay_csv(const DecayCurve& c) {
  const bool s = !c.sigma.empty();
  CsvTable t(s ? std::vector<std::string>{"t_s", "signal", "sigma"}
               : std::vector<std::string>{"t_s", "signal"});
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (s) {
      t.row({c.times_s[i], c.signals[i], c.sigma[i]});
    } else {
      t.row({c.times_s[i], c.signals[i]});
    }
  }
  return t.str();
}

std::string profile_csv(const RelaxometryProfile& p) {
  CsvTable t({"B_T", "R1_per_s", "err", "provenance"});
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double err = p.rate_errors.empty() ? 0.0 : p.rate_errors[i];
    const Provenance prov = p.provenance.empty() ? Provenance::full_curve : p.provenance[i];
    t.row({p.fields_t[i], p.rates_per_s[i], err, to_string(prov)});
  }
  return t.str();
}

std::string spectrum_csv(const EprSpectrum& s) {
  CsvTable t({"field_G", "signal"});
  for (std::size_t i = 0; i < s.size(); ++i) t.row({s.field_g[i], s.signal[i]});
  return t.str();
}

std::string fieldmap_csv(const acq::FieldMap& m) {
  CsvTable t({"position_mm", "field_T"});
  for (std::size_t i = 0; i < m.positions_mm().size(); ++i) {
    t.row({m.positions_mm()[i], m.fields_t()[i]});
  }
  return t.str();
}

}  // namespace t1noise::io
