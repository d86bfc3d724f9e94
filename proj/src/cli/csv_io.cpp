#include "dlfm/cli/csv_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace dlfm::cli {

CsvLayout layout_for(const FitConfig& cfg) {
  CsvLayout layout;
  layout.rows = cfg.feature_rows;
  layout.n = cfg.spec.n;
  if (cfg.spec.loss_per_factor.empty()) throw InvalidInput("losses", "no loss given");
  layout.observation_width = observation_width(cfg.spec.loss_per_factor.front(), layout.rows, layout.n);
  for (std::size_t k = 1; k < cfg.spec.loss_per_factor.size(); ++k)
    if (observation_width(cfg.spec.loss_per_factor[k], layout.rows, layout.n) != layout.observation_width)
      throw InvalidInput("losses[" + std::to_string(k) + "]",
                         "all losses must read the same observation columns");
  return layout;
}

std::vector<std::string> dataset_header(const CsvLayout& layout) {
  std::vector<std::string> h;
  for (Index r = 0; r < layout.rows; ++r)
    for (Index c = 0; c < layout.n; ++c)
      h.push_back(layout.rows == 1 ? "x" + std::to_string(c)
                                   : "x" + std::to_string(r) + "_" + std::to_string(c));
  if (layout.observation_width == 1) {
    h.push_back("y");
  } else {
    for (Index j = 0; j < layout.observation_width; ++j) h.push_back("y" + std::to_string(j));
  }
  return h;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double parse_number(const std::string& cell, const std::string& where) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc() || ptr != last)
    throw InvalidInput(where, "cannot parse \"" + cell + "\" as a number");
  return v;
}

}  // namespace

Dataset parse_dataset(std::istream& in, const CsvLayout& layout, bool ordered) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("data", "empty file, expected a header line");
  auto header = split(line);
  for (auto& h : header) h = trim(h);
  const auto expected = dataset_header(layout);
  if (header != expected) {
    std::string want;
    for (std::size_t i = 0; i < expected.size(); ++i) want += (i ? "," : "") + expected[i];
    throw InvalidInput("data.header", "expected columns " + want);
  }
  const Index nf = layout.rows * layout.n;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    const std::string where = "data.line" + std::to_string(line_no);
    if (cells.size() != expected.size())
      throw InvalidInput(where, "expected " + std::to_string(expected.size()) + " values, got " +
                                    std::to_string(cells.size()));
    std::vector<double> vals;
    for (std::size_t c = 0; c < cells.size(); ++c) vals.push_back(parse_number(trim(cells[c]), where + "." + expected[c]));
    rows.push_back(std::move(vals));
  }
  Dataset d;
  d.rows = layout.rows;
  d.ordered = ordered;
  d.features.resize(static_cast<Index>(rows.size()), nf);
  d.observations.resize(static_cast<Index>(rows.size()), layout.observation_width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Index c = 0; c < nf; ++c) d.features(static_cast<Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
    for (Index c = 0; c < layout.observation_width; ++c)
      d.observations(static_cast<Index>(i), c) = rows[i][static_cast<std::size_t>(nf + c)];
  }
  return d;
}

Dataset read_dataset(const std::string& path, const CsvLayout& layout, bool ordered) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("data", "cannot open " + path);
  return parse_dataset(in, layout, ordered);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

void write_dataset(std::ostream& out, const Dataset& data) {
  CsvLayout layout{data.rows, data.n(), data.observations.cols()};
  const auto header = dataset_header(layout);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (Index i = 0; i < data.size(); ++i) {
    for (Index c = 0; c < data.features.cols(); ++c) out << (c ? "," : "") << format_double(data.features(i, c));
    for (Index c = 0; c < data.observations.cols(); ++c) out << ',' << format_double(data.observations(i, c));
    out << '\n';
  }
}

void write_labels(std::ostream& out, const Labels& labels) {
  out << "label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << labels[i] << '\n';
}

void write_thetas(std::ostream& out, const std::vector<Vector>& thetas) {
  const Index n = thetas.empty() ? 0 : thetas.front().size();
  out << "factor";
  for (Index j = 0; j < n; ++j) out << ",theta" << j;
  out << '\n';
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    out << k + 1;
    for (Index j = 0; j < n; ++j) out << ',' << format_double(thetas[k][j]);
    out << '\n';
  }
}

}  // namespace dlfm::cli
