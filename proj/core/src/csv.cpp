#include "saap/csv.hpp"

#include "saap/util.hpp"

namespace saap {

namespace {

using json = nlohmann::json;

struct Cell {
  std::string value;
  bool quoted = false;
};
using Row = std::vector<Cell>;

void append_quoted(std::string& out, std::string_view text) {
  out.push_back('"');
  for (char ch : text) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
}

// Splits RFC 4180 text into rows, remembering whether each cell was quoted.
std::vector<Row> split_rows(std::string_view text) {
  std::vector<Row> rows;
  Row row;
  Cell cell;
  bool in_quotes = false;
  bool after_quote = false;
  std::size_t i = 0;

  auto end_cell = [&] {
    row.push_back(std::move(cell));
    cell = Cell{};
    after_quote = false;
  };
  auto end_row = [&] {
    end_cell();
    rows.push_back(std::move(row));
    row.clear();
  };

  while (i < text.size()) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.value.push_back('"');
          i += 2;
          continue;
        }
        in_quotes = false;
        after_quote = true;
      } else {
        cell.value.push_back(ch);
      }
      ++i;
      continue;
    }
    if (ch == ',') {
      end_cell();
    } else if (ch == '\n' || (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n')) {
      if (ch == '\r') ++i;
      end_row();
    } else if (ch == '"') {
      if (!cell.value.empty() || cell.quoted) {
        throw ParseFailure("unexpected quote inside cell", i,
                           static_cast<std::ptrdiff_t>(rows.size()));
      }
      cell.quoted = true;
      in_quotes = true;
    } else {
      if (after_quote) {
        throw ParseFailure("text after closing quote", i,
                           static_cast<std::ptrdiff_t>(rows.size()));
      }
      cell.value.push_back(ch);
    }
    ++i;
  }
  if (in_quotes) {
    throw ParseFailure("unterminated quoted cell", text.size(),
                       static_cast<std::ptrdiff_t>(rows.size()));
  }
  if (!row.empty() || !cell.value.empty() || cell.quoted) end_row();
  return rows;
}

}  // namespace

std::string csv_header(const SchemaConfig& schema) {
  std::string out;
  for (std::size_t i = 0; i < schema.csv_column_order.size(); ++i) {
    if (i != 0) out.push_back(',');
    out += schema.csv_column_order[i];
  }
  out.push_back('\n');
  return out;
}

std::string export_csv(std::span<const AnalysisRecord> records,
                       const SchemaConfig& schema) {
  check_schema(schema);
  std::string out = csv_header(schema);
  for (std::size_t r = 0; r < records.size(); ++r) {
    auto report = validate_record(records[r], schema);
    if (!report.ok()) {
      throw SchemaViolation("record " + std::to_string(r) + " is invalid:\n" +
                                report.to_string(),
                            {{report, to_structured_text(records[r])}});
    }
    const json j = record_to_json(records[r]);
    for (std::size_t c = 0; c < schema.csv_column_order.size(); ++c) {
      if (c != 0) out.push_back(',');
      const auto& name = schema.csv_column_order[c];
      auto it = j.find(name);
      if (it == j.end()) continue;
      const FieldSpec* spec = schema.find(name);
      switch (spec->kind) {
        case FieldKind::kNumeric:
          out += format_number(it->get<double>());
          break;
        case FieldKind::kText:
          append_quoted(out, it->get_ref<const std::string&>());
          break;
        case FieldKind::kStructured:
          append_quoted(out, it->dump());
          break;
      }
    }
    out.push_back('\n');
  }
  return out;
}

std::vector<AnalysisRecord> import_csv(std::string_view text, const SchemaConfig& schema) {
  check_schema(schema);
  const auto rows = split_rows(text);
  if (rows.empty()) throw ParseFailure("missing header row", 0, 0);

  const auto& header = rows.front();
  const auto& columns = schema.csv_column_order;
  bool header_ok = header.size() == columns.size();
  for (std::size_t c = 0; header_ok && c < columns.size(); ++c) {
    header_ok = !header[c].quoted && header[c].value == columns[c];
  }
  if (!header_ok) {
    throw ParseFailure("header does not match schema " + schema.version, 0, 0);
  }

  std::vector<AnalysisRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto row_index = static_cast<std::ptrdiff_t>(r);
    if (row.size() != columns.size()) {
      throw ParseFailure("row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                             " cells, expected " + std::to_string(columns.size()),
                         0, row_index);
    }
    json obj = json::object();
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const Cell& cell = row[c];
      if (!cell.quoted && cell.value.empty()) continue;  // absent
      const FieldSpec* spec = schema.find(columns[c]);
      switch (spec->kind) {
        case FieldKind::kNumeric: {
          auto value = cell.quoted ? std::nullopt : parse_number(cell.value);
          if (!value) {
            throw ParseFailure("row " + std::to_string(r) + ": column " + columns[c] +
                                   " is not a number",
                               0, row_index);
          }
          obj[columns[c]] = *value;
          break;
        }
        case FieldKind::kText:
          obj[columns[c]] = cell.value;
          break;
        case FieldKind::kStructured:
          try {
            obj[columns[c]] = json::parse(cell.value);
          } catch (const json::parse_error& e) {
            throw ParseFailure("row " + std::to_string(r) + ": column " + columns[c] +
                                   " is not structured text: " + e.what(),
                               e.byte, row_index);
          }
          break;
      }
    }
    try {
      records.push_back(record_from_json(obj, schema));
    } catch (const SchemaViolation& e) {
      throw SchemaViolation("row " + std::to_string(r) + ": " + e.what(), e.attempts());
    }
  }
  return records;
}

}  // namespace saap
