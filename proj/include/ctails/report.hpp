#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctails/errors.hpp"
#include "ctails/numeric.hpp"
#include "ctails/version.hpp"

namespace ctails {

// Round-trip-exact, locale-independent float formatting. All file output goes
// through here so bytes depend only on (config, seed), never on thread count.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

struct ReportMeta {
  std::string command;  // full config echo, e.g. "tail --beta 0.5 --n 6 ..."
  std::uint64_t seed = 0;
};

// Column-named table of preformatted cells; CSV and JSON render the same bytes
// for the same table.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> cells) {
    if (cells.size() != columns.size())
      throw ConfigError("table row width does not match header");
    rows.push_back(std::move(cells));
  }
};

inline std::string render_csv(const Table& t, const ReportMeta& meta) {
  std::string out;
  out += "# cascade-tails ";
  out += kVersion;
  out += "\n# config: ";
  out += meta.command;
  out += "\n# seed: ";
  out += std::to_string(meta.seed);
  out += "\n";
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    if (c) out += ',';
    out += csv_quote(t.columns[c]);
  }
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += csv_quote(row[c]);
    }
    out += '\n';
  }
  return out;
}

inline std::string render_json(const Table& t, const ReportMeta& meta) {
  nlohmann::ordered_json j;
  j["tool"] = std::string("cascade-tails ") + kVersion;
  j["config"] = meta.command;
  j["seed"] = meta.seed;
  j["columns"] = t.columns;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : t.rows) {
    nlohmann::ordered_json r = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < row.size(); ++c) r[t.columns[c]] = row[c];
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open output file: " + path);
  f << content;
  if (!f) throw ConfigError("write failed: " + path);
}

// --- SVG log-log tail plot ------------------------------------------------------
//
// Points (log x, log(-log p)) with the fitted line and its slope label.
// Fixed 6-decimal coordinates: deterministic bytes.

inline std::string format_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string render_loglog_svg(std::span<const double> x,
                                     std::span<const double> log_prob, double slope,
                                     double intercept) {
  if (x.size() < 2 || x.size() != log_prob.size())
    throw ConfigError("plot: need >= 2 (x, log_prob) points");
  std::vector<double> px(x.size()), py(x.size());
  double xmin = kNegInf, xmax = -kNegInf, ymin = kNegInf, ymax = -kNegInf;
  xmin = ymin = std::numeric_limits<double>::infinity();
  xmax = ymax = -xmin;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(log_prob[i] < 0.0))
      throw ConfigError("plot: need x > 0 and log_prob < 0");
    px[i] = std::log(x[i]);
    py[i] = std::log(-log_prob[i]);
    xmin = std::min(xmin, px[i]);
    xmax = std::max(xmax, px[i]);
    ymin = std::min(ymin, py[i]);
    ymax = std::max(ymax, py[i]);
  }
  const double w = 640.0, h = 480.0, margin = 60.0;
  const double dx = xmax > xmin ? xmax - xmin : 1.0;
  const double dy = ymax > ymin ? ymax - ymin : 1.0;
  auto sx = [&](double v) { return margin + (v - xmin) / dx * (w - 2 * margin); };
  auto sy = [&](double v) { return h - margin - (v - ymin) / dy * (h - 2 * margin); };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
         "viewBox=\"0 0 640 480\">\n";
  svg += "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  svg += "<line x1=\"60\" y1=\"420\" x2=\"580\" y2=\"420\" stroke=\"black\"/>\n";
  svg += "<line x1=\"60\" y1=\"60\" x2=\"60\" y2=\"420\" stroke=\"black\"/>\n";
  // fitted line across the x range
  svg += "<line x1=\"" + format_coord(sx(xmin)) + "\" y1=\"" +
         format_coord(sy(intercept + slope * xmin)) + "\" x2=\"" + format_coord(sx(xmax)) +
         "\" y2=\"" + format_coord(sy(intercept + slope * xmax)) +
         "\" stroke=\"#c33\" stroke-width=\"1.5\"/>\n";
  for (std::size_t i = 0; i < px.size(); ++i)
    svg += "<circle cx=\"" + format_coord(sx(px[i])) + "\" cy=\"" +
           format_coord(sy(py[i])) + "\" r=\"3\" fill=\"#235\"/>\n";
  char label[64];
  std::snprintf(label, sizeof(label), "slope %.3f", slope);
  svg += "<text x=\"70\" y=\"50\" font-family=\"monospace\" font-size=\"14\">";
  svg += label;
  svg += "</text>\n";
  svg += "<text x=\"70\" y=\"445\" font-family=\"monospace\" font-size=\"12\">"
         "log x</text>\n";
  svg += "<text x=\"8\" y=\"56\" font-family=\"monospace\" font-size=\"12\">"
         "log(-log p)</text>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace ctails
