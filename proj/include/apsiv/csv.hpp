// CSV ingestion and emission for datasets. Strict numeric format: '.' decimal
// point only, no locale, no quoting; floats emitted with the shortest
// representation that round-trips, so ingest(emit(data)) == data exactly.
#pragma once

#include <string>
#include <vector>

#include "apsiv/data.hpp"

namespace apsiv {

// Column roles. Continuous/discrete covariates keep the listed order.
struct CsvSchema {
  std::string outcome = "y";
  std::string treatment = "d";
  std::string instrument = "z";
  std::vector<std::string> continuous;  // x_cont columns, in order
  std::vector<std::string> discrete;    // x_disc columns, in order
  std::string balance;                  // optional extra outcome column
};

struct CsvDataset {
  Dataset data;
  Eigen::VectorXd balance;  // filled iff schema.balance is nonempty
};

// Parse CSV text. Throws MissingColumn when a scheduled column is absent,
// ParseError("row R, column 'name': ...") on malformed cells, NonBinary for
// treatment/instrument values outside {0,1}.
CsvDataset ingest_csv_text(const std::string& text, const CsvSchema& schema);

// File variant; throws ParseError when the file cannot be read.
CsvDataset ingest_csv(const std::string& path, const CsvSchema& schema);

// Emit with header y,d,z,continuous...,discrete... using the schema's names;
// when the schema lists no covariate names, x1..xP / g1..gK are used.
std::string emit_csv(const Dataset& data, CsvSchema schema = {});

// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace apsiv
