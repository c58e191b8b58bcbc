#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "t1noise/acquisition.hpp"
#include "t1noise/data.hpp"

namespace t1noise::io {

// CSV schemas (header row required; '#' lines and blank lines are skipped):
//   decay     t_s,signal[,sigma]
//   profile   B_T,R1_per_s[,err[,provenance]]
//   spectrum  field_G,signal
//   fieldmap  position_mm,field_T
// Column names carry their unit; a mismatching name is a ParseError naming
// the column.
enum class DatasetKind { decay, profile, spectrum, fieldmap };

std::string to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& s);

using Dataset = std::variant<DecayCurve, RelaxometryProfile, EprSpectrum, acq::FieldMap>;

// `source` names the text in error messages.
DecayCurve parse_decay_csv(std::string_view text, const std::string& source = "<decay>");
RelaxometryProfile parse_profile_csv(std::string_view text, const std::string& source = "<profile>");
EprSpectrum parse_spectrum_csv(std::string_view text, const std::string& source = "<spectrum>");
acq::FieldMap parse_fieldmap_csv(std::string_view text, const std::string& source = "<fieldmap>");

Dataset ingest_dataset(const std::filesystem::path& path, DatasetKind kind);

std::string read_text_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames it into place.
void write_text_file(const std::filesystem::path& path, std::string_view content);

// Shortest round-trip representation; identical inputs give identical text.
std::string format_number(double v);

// Row-oriented CSV builder with a fixed column order.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  CsvTable& row(const std::vector<double>& values);
  CsvTable& row(std::initializer_list<double> values) { return row(std::vector<double>(values)); }
  // Mixed rows: numbers are formatted with format_number.
  CsvTable& row(const std::vector<std::variant<double, std::string>>& cells);
  std::string str() const;
  std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::string> rows_;
};

std::string decay_csv(const DecayCurve& curve);
std::string profile_csv(const RelaxometryProfile& profile);
std::string spectrum_csv(const EprSpectrum& spectrum);
std::string fieldmap_csv(const acq::FieldMap& map);

}  // namespace t1noise::io
