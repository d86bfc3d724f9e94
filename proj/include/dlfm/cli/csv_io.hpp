#pragma once

// Dataset CSV: a header line, then one sample per line. Feature columns are
// x0..x{n-1} for vector features or x{r}_{c} (row-major) for matrix features;
// observation columns are y for width 1, else y0..y{w-1}.

#include "dlfm/cli/config.hpp"
#include "dlfm/factors.hpp"
#include "dlfm/model.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace dlfm::cli {

struct CsvLayout {
  Index rows = 1;
  Index n = 1;
  Index observation_width = 1;
};

CsvLayout layout_for(const FitConfig& cfg);
std::vector<std::string> dataset_header(const CsvLayout& layout);

// Throws InvalidInput on a header mismatch, a short row or an unparsable value.
Dataset parse_dataset(std::istream& in, const CsvLayout& layout, bool ordered);
Dataset read_dataset(const std::string& path, const CsvLayout& layout, bool ordered);

void write_dataset(std::ostream& out, const Dataset& data);
void write_labels(std::ostream& out, const Labels& labels);
void write_thetas(std::ostream& out, const std::vector<Vector>& thetas);

// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace dlfm::cli
