#include "ltsurv/io/csv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ltsurv/errors.hpp"

namespace ltsurv {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

double parse_number(const std::string& token, std::size_t line,
                    const std::string& column) {
  if (token.empty())
    throw ParseError(line, "empty value in column '" + column + "'");
  errno = 0;
  char* end = nullptr;
  const double value = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size() || errno == ERANGE)
    throw ParseError(line, "cannot parse '" + token + "' in column '" + column +
                               "' as a number");
  return value;
}

struct Header {
  std::vector<std::string> names;
  int idx(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k] == name) return static_cast<int>(k);
    return -1;
  }
};

struct Reader {
  std::ifstream in;
  Header header;
  std::size_t line_no = 1;

  explicit Reader(const std::string& path) : in(path) {
    if (!in) throw DataError("cannot open file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file: " + path);
    header.names = split_line(line);
    if (header.names.empty()) throw DataError("missing header row: " + path);
  }

  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      fields = split_line(line);
      if (fields.size() != header.names.size())
        throw ParseError(line_no, "expected " + std::to_string(header.names.size()) +
                                      " fields, found " +
                                      std::to_string(fields.size()));
      return true;
    }
    return false;
  }
};

}  // namespace

bool RowFilter::accepts(double x) const {
  switch (op) {
    case Op::lt: return x < value;
    case Op::le: return x <= value;
    case Op::gt: return x > value;
    case Op::ge: return x >= value;
    case Op::eq: return x == value;
    case Op::ne: return x != value;
  }
  return false;
}

RowFilter parse_row_filter(const std::string& expression) {
  static const std::pair<const char*, RowFilter::Op> ops[] = {
      {"<=", RowFilter::Op::le}, {">=", RowFilter::Op::ge},
      {"==", RowFilter::Op::eq}, {"!=", RowFilter::Op::ne},
      {"<", RowFilter::Op::lt},  {">", RowFilter::Op::gt}};
  for (const auto& [text, op] : ops) {
    const auto pos = expression.find(text);
    if (pos == std::string::npos) continue;
    RowFilter f;
    f.column = trim(expression.substr(0, pos));
    f.op = op;
    const std::string rhs = trim(expression.substr(pos + std::strlen(text)));
    if (f.column.empty() || rhs.empty()) break;
    try {
      std::size_t used = 0;
      f.value = std::stod(rhs, &used);
      if (used != rhs.size()) break;
    } catch (const std::exception&) {
      break;
    }
    return f;
  }
  throw InvalidArgument("cannot parse filter expression '" + expression +
                        "' (expected: <column> <op> <number>)");
}

Cohort load_cohort_csv(const std::string& path, const CsvSchema& schema,
                       bool require_truncation_consistency,
                       const std::optional<RowFilter>& filter) {
  Reader reader(path);
  const Header& h = reader.header;

  const int c_entry = h.idx(schema.entry_time);
  const int c_time = h.idx(schema.time);
  const int c_event = h.idx(schema.event);
  if (c_entry < 0) throw MissingColumn(schema.entry_time);
  if (c_time < 0) throw MissingColumn(schema.time);
  if (c_event < 0) throw MissingColumn(schema.event);
  const int c_weight = h.idx(schema.weight);
  const int c_arm = h.idx(schema.arm);
  int c_filter = -1;
  if (filter) {
    c_filter = h.idx(filter->column);
    if (c_filter < 0) throw MissingColumn(filter->column);
  }

  std::vector<int> cov_cols;
  std::vector<std::string> cov_names;
  for (std::size_t k = 0; k < h.names.size(); ++k) {
    const auto ki = static_cast<int>(k);
    if (ki == c_entry || ki == c_time || ki == c_event || ki == c_weight ||
        ki == c_arm)
      continue;
    cov_cols.push_back(ki);
    cov_names.push_back(h.names[k]);
  }

  std::vector<SurvivalRecord> records;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    const std::size_t line = reader.line_no;
    if (filter) {
      const double x = parse_number(fields[static_cast<std::size_t>(c_filter)],
                                    line, filter->column);
      if (!filter->accepts(x)) continue;
    }

    SurvivalRecord r;
    r.entry_time = parse_number(fields[static_cast<std::size_t>(c_entry)], line,
                                schema.entry_time);
    r.observed_time =
        parse_number(fields[static_cast<std::size_t>(c_time)], line, schema.time);
    const std::string& ev = fields[static_cast<std::size_t>(c_event)];
    if (ev == "0")
      r.event = false;
    else if (ev == "1")
      r.event = true;
    else
      throw ParseError(line, "event must be 0 or 1, found '" + ev + "'");
    if (c_weight >= 0)
      r.weight = parse_number(fields[static_cast<std::size_t>(c_weight)], line,
                              schema.weight);
    if (c_arm >= 0) {
      const std::string& a = fields[static_cast<std::size_t>(c_arm)];
      if (a == "reference")
        r.arm = Arm::reference;
      else if (a == "truncated")
        r.arm = Arm::truncated;
      else
        throw ParseError(line, "arm must be 'reference' or 'truncated', found '" +
                                   a + "'");
    }
    r.covariates.resize(static_cast<Eigen::Index>(cov_cols.size()));
    for (std::size_t k = 0; k < cov_cols.size(); ++k)
      r.covariates[static_cast<Eigen::Index>(k)] = parse_number(
          fields[static_cast<std::size_t>(cov_cols[k])], line, cov_names[k]);

    // Per-row validation so failures report line numbers.
    if (!std::isfinite(r.entry_time) || !std::isfinite(r.observed_time) ||
        !std::isfinite(r.weight) || !r.covariates.allFinite())
      throw ValidationError(line, "non-finite value");
    if (r.entry_time < 0.0)
      throw ValidationError(line, "entry time must be nonnegative");
    if (!(r.observed_time > 0.0))
      throw ValidationError(line, "time must be positive");
    if (!(r.weight > 0.0)) throw ValidationError(line, "weight must be positive");
    if (require_truncation_consistency && !(r.observed_time > r.entry_time))
      throw ValidationError(line, "time must exceed entry time (Y > E)");

    records.push_back(std::move(r));
  }
  if (records.empty()) throw EmptyCohort();
  return validate_cohort(std::move(records), std::move(cov_names),
                         require_truncation_consistency);
}

Eigen::MatrixXd load_covariates_csv(const std::string& path,
                                    const std::vector<std::string>& names,
                                    const std::optional<RowFilter>& filter) {
  Reader reader(path);
  std::vector<int> cols;
  for (const std::string& name : names) {
    const int c = reader.header.idx(name);
    if (c < 0) throw MissingColumn(name);
    cols.push_back(c);
  }
  int c_filter = -1;
  if (filter) {
    c_filter = reader.header.idx(filter->column);
    if (c_filter < 0) throw MissingColumn(filter->column);
  }

  std::vector<std::vector<double>> rows;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    if (filter) {
      const double x = parse_number(fields[static_cast<std::size_t>(c_filter)],
                                    reader.line_no, filter->column);
      if (!filter->accepts(x)) continue;
    }
    std::vector<double> row;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const double v = parse_number(fields[static_cast<std::size_t>(cols[k])],
                                    reader.line_no, names[k]);
      if (!std::isfinite(v)) throw ValidationError(reader.line_no, "non-finite value");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw EmptyCohort();

  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < names.size(); ++k)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  return out;
}

std::vector<std::string> csv_column_names(const std::string& path) {
  return Reader(path).header.names;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void save_cohort_csv(const std::string& path, const Cohort& cohort,
                     const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  out << schema.entry_time << ',' << schema.time << ',' << schema.event << ','
      << schema.weight << ',' << schema.arm;
  for (const std::string& name : cohort.covariate_names()) out << ',' << name;
  out << '\n';
  for (const SurvivalRecord& r : cohort.records()) {
    out << format_double(r.entry_time) << ',' << format_double(r.observed_time)
        << ',' << (r.event ? 1 : 0) << ',' << format_double(r.weight) << ','
        << (r.arm == Arm::reference ? "reference" : "truncated");
    for (Eigen::Index k = 0; k < r.covariates.size(); ++k)
      out << ',' << format_double(r.covariates[k]);
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace ltsurv
