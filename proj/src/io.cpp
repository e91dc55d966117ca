#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string_view>

#include <nlohmann/json.hpp>

#include "ebshrink/detail/format.hpp"
#include "ebshrink/error.hpp"
#include "ebshrink/iocli.hpp"

namespace ebshrink {

namespace {

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cells.emplace_back(line.substr(start));
      break;
    }
    cells.emplace_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cells;
}

std::string where(const std::string& source, std::size_t line, std::size_t column) {
  return source + ":" + std::to_string(line) + ":" + std::to_string(column);
}

double parse_cell(const std::string& cell, const std::string& location) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec == std::errc::result_out_of_range) {
    throw Error(ErrorKind::ParseError, location + ": value out of range '" + cell + "'");
  }
  if (ec != std::errc() || ptr != last || first == last) {
    throw Error(ErrorKind::ParseError, location + ": not a number '" + cell + "'");
  }
  if (!std::isfinite(value)) {
    throw Error(ErrorKind::ParseError, location + ": non-finite value '" + cell + "'");
  }
  return value;
}

double json_real(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

std::string json_real_text(double v) {
  return std::isfinite(v) ? detail::format_real(v) : std::string("null");
}

std::string json_array(const VectorXd& v) {
  std::string out = "[";
  for (Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ",";
    out += json_real_text(v(i));
  }
  return out + "]";
}

}  // namespace

MatrixFile parse_matrix_tsv(std::istream& in, bool allow_na, const std::string& source) {
  std::vector<std::vector<std::string>> lines;
  std::string line;
  std::size_t line_no = 0;
  std::size_t header_line = 0;
  std::vector<std::size_t> line_numbers;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lines.empty()) header_line = line_no;
    lines.push_back(split_tabs(line));
    line_numbers.push_back(line_no);
  }
  if (lines.empty()) throw Error(ErrorKind::ParseError, source + ": empty file");

  MatrixFile file;
  const auto& header = lines.front();
  const bool has_ids = header.front() == "#id";
  file.col_ids.assign(header.begin() + (has_ids ? 1 : 0), header.end());
  const std::size_t cols = file.col_ids.size();
  if (cols == 0) throw Error(ErrorKind::ParseError, where(source, header_line, 1) + ": no columns");
  const std::size_t rows = lines.size() - 1;
  file.values.resize(static_cast<Index>(rows), static_cast<Index>(cols));
  file.na_mask = MaskMatrix::Constant(static_cast<Index>(rows), static_cast<Index>(cols), false);

  for (std::size_t r = 0; r < rows; ++r) {
    const auto& cells = lines[r + 1];
    const std::size_t ln = line_numbers[r + 1];
    const std::size_t expected = cols + (has_ids ? 1 : 0);
    if (cells.size() != expected) {
      throw Error(ErrorKind::ParseError, where(source, ln, 1) + ": expected " +
                                             std::to_string(expected) + " cells, found " +
                                             std::to_string(cells.size()));
    }
    if (has_ids) file.row_ids.push_back(cells.front());
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t cell_col = c + (has_ids ? 1 : 0);
      const std::string& cell = cells[cell_col];
      const auto ri = static_cast<Index>(r);
      const auto ci = static_cast<Index>(c);
      if (cell == "NA") {
        if (!allow_na) {
          throw Error(ErrorKind::NaInCovariates, where(source, ln, cell_col + 1) + ": NA not allowed here");
        }
        file.na_mask(ri, ci) = true;
        file.values(ri, ci) = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      file.values(ri, ci) = parse_cell(cell, where(source, ln, cell_col + 1));
    }
  }
  return file;
}

MatrixFile read_matrix_tsv(const std::string& path, bool allow_na) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  return parse_matrix_tsv(in, allow_na, path);
}

void write_matrix_tsv(std::ostream& out, const MatrixFile& file) {
  const Index rows = file.values.rows();
  const Index cols = file.values.cols();
  if (static_cast<Index>(file.col_ids.size()) != cols) {
    throw Error(ErrorKind::BadShape, "one column id per column is required");
  }
  const bool has_ids = !file.row_ids.empty();
  if (has_ids && static_cast<Index>(file.row_ids.size()) != rows) {
    throw Error(ErrorKind::BadShape, "one row id per row is required");
  }
  const bool has_mask = file.na_mask.size() > 0;
  if (has_ids) out << "#id\t";
  for (Index c = 0; c < cols; ++c) out << (c > 0 ? "\t" : "") << file.col_ids[static_cast<std::size_t>(c)];
  out << '\n';
  for (Index r = 0; r < rows; ++r) {
    if (has_ids) out << file.row_ids[static_cast<std::size_t>(r)] << '\t';
    for (Index c = 0; c < cols; ++c) {
      if (c > 0) out << '\t';
      if (has_mask && file.na_mask(r, c)) {
        out << "NA";
      } else {
        out << detail::format_real(file.values(r, c));
      }
    }
    out << '\n';
  }
}

void write_matrix_tsv(const std::string& path, const MatrixFile& file) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  write_matrix_tsv(out, file);
}

std::string fit_to_json(const FitResult& result) {
  std::string out = "{\n  \"params\": {\"tau1\": " + json_real_text(result.params.tau1) +
                    ", \"beta\": " + json_array(result.params.beta) +
                    ", \"eta\": " + json_real_text(result.params.eta) +
                    ", \"sigma2\": " + json_real_text(result.params.sigma2) + "},\n";
  out += "  \"posteriors\": [";
  for (std::size_t t = 0; t < result.posteriors.size(); ++t) {
    const auto& post = result.posteriors[t];
    const std::string name = t < result.tissue_names.size() ? result.tissue_names[t]
                                                            : "tissue_" + std::to_string(t + 1);
    out += t > 0 ? ",\n    " : "\n    ";
    out += "{\"tissue\": " + nlohmann::json(name).dump() + ", \"h\": " + json_real_text(post.h) +
           ", \"post_mean\": " + json_array(post.post_mean) +
           ", \"log_bf\": " + json_real_text(post.log_bf) +
           ", \"log_odds\": " + json_real_text(post.log_odds) + "}";
  }
  out += "\n  ],\n  \"loglik_trace\": ";
  out += json_array(Eigen::Map<const VectorXd>(result.loglik_trace.data(),
                                               static_cast<Index>(result.loglik_trace.size())));
  out += ",\n  \"iterations\": " + std::to_string(result.iterations);
  out += ",\n  \"converged\": " + std::string(result.converged ? "true" : "false");
  out += "\n}\n";
  return out;
}

FitResult fit_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("fit report: ") + e.what());
  }
  auto vec = [](const nlohmann::json& arr) {
    VectorXd v(static_cast<Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<Index>(i)) = json_real(arr[i]);
    return v;
  };
  try {
    FitResult result;
    const auto& params = doc.at("params");
    result.params.tau1 = json_real(params.at("tau1"));
    result.params.beta = vec(params.at("beta"));
    result.params.eta = json_real(params.at("eta"));
    result.params.sigma2 = json_real(params.at("sigma2"));
    for (const auto& post : doc.at("posteriors")) {
      TissuePosterior tp;
      tp.h = json_real(post.at("h"));
      tp.post_mean = vec(post.at("post_mean"));
      tp.log_bf = json_real(post.at("log_bf"));
      tp.log_odds = json_real(post.at("log_odds"));
      tp.cond_mean_active = tp.h > 0.0 ? VectorXd(tp.post_mean / tp.h) : VectorXd(tp.post_mean);
      result.posteriors.push_back(std::move(tp));
      result.tissue_names.push_back(post.at("tissue").get<std::string>());
    }
    for (const auto& v : doc.at("loglik_trace")) result.loglik_trace.push_back(json_real(v));
    result.iterations = doc.at("iterations").get<int>();
    result.converged = doc.at("converged").get<bool>();
    return result;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("fit report: ") + e.what());
  }
}

void write_fit_json(const std::string& path, const FitResult& result) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  out << fit_to_json(result);
}

FitResult read_fit_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return fit_from_json(buffer.str());
}

MatrixXd predict(const MatrixXd& x_new, const FitResult& result) {
  const Index m = static_cast<Index>(result.posteriors.size());
  if (m == 0) throw Error(ErrorKind::BadShape, "fit has no tasks");
  const Index p = result.posteriors.front().post_mean.size();
  if (x_new.cols() != p) throw Error(ErrorKind::BadShape, "new covariates must have p columns");
  MatrixXd effects(p, m);
  for (Index t = 0; t < m; ++t) {
    const auto& post_mean = result.posteriors[static_cast<std::size_t>(t)].post_mean;
    if (post_mean.size() != p) throw Error(ErrorKind::BadShape, "posterior means differ in length");
    effects.col(t) = post_mean;
  }
  return x_new * effects;
}

}  // namespace ebshrink
