#pragma once

// CSV batches of analysis records.
//
// Dialect: comma separator, LF line ends, mandatory header of field names in
// the schema's column order. Numeric cells are written bare; text and
// structured cells are always double-quoted with embedded quotes doubled;
// an absent optional field is an empty bare cell. Structured cells carry the
// canonical structured-text form. Output is byte-stable for a schema version.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "saap/record_schema.hpp"

namespace saap {

std::string csv_header(const SchemaConfig& schema);

// Throws SchemaViolation if any record fails validation.
std::string export_csv(std::span<const AnalysisRecord> records,
                       const SchemaConfig& schema);

// Throws ParseFailure (with the offending row; 0 = header) on malformed CSV
// and SchemaViolation when a row does not describe a valid record.
std::vector<AnalysisRecord> import_csv(std::string_view text,
                                       const SchemaConfig& schema);

}  // namespace saap
