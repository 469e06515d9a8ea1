#include "invarep/dataset_io.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <vector>

namespace invarep {
namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

[[noreturn]] void fail(const std::string& path, std::size_t line_no, const std::string& what) {
  throw ParseError(path + ":" + std::to_string(line_no) + ": " + what);
}

double parse_double(const std::string& tok, const std::string& path, std::size_t line_no) {
  if (tok.empty()) fail(path, line_no, "empty numeric field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size()) {
    fail(path, line_no, "malformed number '" + tok + "'");
  }
  return v;
}

int parse_domain(const std::string& tok, const std::string& path, std::size_t line_no) {
  if (tok.empty()) fail(path, line_no, "empty domain field");
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (end != tok.c_str() + tok.size() || errno == ERANGE) {
    fail(path, line_no, "malformed domain id '" + tok + "'");
  }
  return static_cast<int>(v);
}

}  // namespace

void save_dataset(const MultiDomainDataset& d, const std::string& path) {
  if (d.x.rows() != d.y.size() || d.x.rows() != d.domain.size()) {
    throw ShapeError("save_dataset: inconsistent row counts");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_dataset: cannot open " + path);
  out << "domain,y";
  for (std::size_t j = 0; j < d.dim(); ++j) out << ",x" << j;
  out << "\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << d.domain[i] << ',' << format_double(d.y[i]);
    for (std::size_t j = 0; j < d.dim(); ++j) out << ',' << format_double(d.x(i, j));
    out << "\n";
  }
  out.flush();
  if (!out) throw IoError("save_dataset: write failed for " + path);
}

MultiDomainDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_dataset: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) fail(path, 1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> head = split_csv(line);
  if (head.size() < 2 || head[0] != "domain" || head[1] != "y") {
    fail(path, 1, "header must start with 'domain,y'");
  }
  const std::size_t dim = head.size() - 2;
  for (std::size_t j = 0; j < dim; ++j) {
    if (head[j + 2] != "x" + std::to_string(j)) {
      fail(path, 1, "expected column 'x" + std::to_string(j) + "', got '" + head[j + 2] + "'");
    }
  }

  std::vector<int> domains;
  Vec ys;
  std::vector<double> xs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) fail(path, line_no, "empty row");
    const std::vector<std::string> tok = split_csv(line);
    if (tok.size() != dim + 2) {
      fail(path, line_no,
           "expected " + std::to_string(dim + 2) + " columns, got " + std::to_string(tok.size()));
    }
    domains.push_back(parse_domain(tok[0], path, line_no));
    ys.push_back(parse_double(tok[1], path, line_no));
    for (std::size_t j = 0; j < dim; ++j) xs.push_back(parse_double(tok[j + 2], path, line_no));
  }

  MultiDomainDataset d;
  d.x = Mat(ys.size(), dim);
  std::copy(xs.begin(), xs.end(), d.x.data());
  d.y = std::move(ys);
  d.domain = std::move(domains);
  return d;
}

}  // namespace invarep
