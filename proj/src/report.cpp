#include "rsoft/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <tuple>

#include "rsoft/errors.hpp"

namespace rsoft {

namespace {

std::string num(double v, int precision = 17) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream out;
  out << std::setprecision(precision) << v;
  return out.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// JSON has no infinities; non-finite values travel as "inf", "-inf" or "nan".
nlohmann::json real_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

}  // namespace

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream out;
  out << "method,dataset,metric,mean,std,n,failures\n";
  for (const auto& r : rows) {
    out << csv_field(r.method) << ',' << csv_field(r.dataset) << ',' << csv_field(r.metric) << ','
        << num(r.mean) << ',' << num(r.std) << ',' << r.n << ',' << r.failures << '\n';
  }
  return out.str();
}

nlohmann::json aggregate_json(const std::vector<AggregateRow>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"method", r.method},
                   {"dataset", r.dataset},
                   {"metric", r.metric},
                   {"mean", real_json(r.mean)},
                   {"std", real_json(r.std)},
                   {"n", r.n},
                   {"failures", r.failures}});
  }
  return arr;
}

std::string grid_csv(const GridResult& grid) {
  std::ostringstream out;
  out << "temperature,value,error\n";
  for (const auto& r : grid.rows) {
    out << num(r.temperature) << ',' << (r.value ? num(*r.value) : "") << ','
        << csv_field(r.error) << '\n';
  }
  return out.str();
}

nlohmann::json grid_json(const GridResult& grid) {
  nlohmann::json j;
  j["metric"] = grid.metric;
  j["minimize"] = grid.minimize;
  j["best_temperature"] =
      grid.best_temperature ? real_json(*grid.best_temperature) : nlohmann::json(nullptr);
  j["best_value"] = grid.best_value ? real_json(*grid.best_value) : nlohmann::json(nullptr);
  auto rows = nlohmann::json::array();
  for (const auto& r : grid.rows) {
    rows.push_back({{"temperature", real_json(r.temperature)},
                    {"value", r.value ? real_json(*r.value) : nlohmann::json(nullptr)},
                    {"error", r.error},
                    {"config_hash", r.record.config_hash}});
  }
  j["rows"] = rows;
  return j;
}

std::string method_table_markdown(const std::vector<AggregateRow>& rows,
                                  const std::vector<std::string>& methods,
                                  const std::map<std::string, std::string>& cell_suffix,
                                  const std::string& note) {
  std::vector<std::string> metrics, datasets;
  std::map<std::tuple<std::string, std::string, std::string>, const AggregateRow*> cell;
  for (const auto& r : rows) {
    if (std::find(metrics.begin(), metrics.end(), r.metric) == metrics.end()) {
      metrics.push_back(r.metric);
    }
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) {
      datasets.push_back(r.dataset);
    }
    cell[{r.metric, r.dataset, r.method}] = &r;
  }
  std::ostringstream out;
  out << "| Method |";
  for (const auto& m : methods) out << ' ' << m << " |";
  out << "\n|---|";
  for (std::size_t k = 0; k < methods.size(); ++k) out << "---|";
  out << '\n';
  for (const auto& metric : metrics) {
    out << "| **" << metric << "** |";
    for (std::size_t k = 0; k < methods.size(); ++k) out << " |";
    out << '\n';
    for (const auto& ds : datasets) {
      out << "| " << ds << " |";
      for (const auto& m : methods) {
        const auto it = cell.find({metric, ds, m});
        if (it == cell.end() || it->second->n == 0) {
          out << " n/a |";
          continue;
        }
        out << ' ' << num(it->second->mean, 4);
        if (it->second->n > 1) out << " ± " << num(it->second->std, 2);
        const auto sfx = cell_suffix.find(m + "|" + ds + "|" + metric);
        if (sfx != cell_suffix.end()) out << " - " << sfx->second;
        out << " |";
      }
      out << '\n';
    }
  }
  if (!note.empty()) out << '\n' << note << '\n';
  return out.str();
}

std::string loss_trace_csv(const RunRecord& record) {
  std::ostringstream out;
  out << "step,loss\n";
  for (std::size_t k = 0; k < record.loss_trace.size(); ++k) {
    out << k + 1 << ',' << num(record.loss_trace[k]) << '\n';
  }
  return out.str();
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

struct Frame {
  double left = 70, right = 150, top = 40, bottom = 50;
  double w, h;
  Frame(const ChartOptions& o) : w(o.width), h(o.height) {}
  double plot_w() const { return w - left - right; }
  double plot_h() const { return h - top - bottom; }
};

void svg_header(std::ostringstream& out, const ChartOptions& o, const Frame& f) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << o.width << "\" height=\""
      << o.height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << o.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << xml_escape(o.title) << "</text>\n";
  out << "<text x=\"" << f.left + f.plot_w() / 2 << "\" y=\"" << o.height - 10
      << "\" text-anchor=\"middle\">" << xml_escape(o.x_label) << "</text>\n";
  out << "<text x=\"15\" y=\"" << f.top + f.plot_h() / 2 << "\" text-anchor=\"middle\" "
      << "transform=\"rotate(-90 15 " << f.top + f.plot_h() / 2 << ")\">"
      << xml_escape(o.y_label) << "</text>\n";
  out << "<rect x=\"" << f.left << "\" y=\"" << f.top << "\" width=\"" << f.plot_w()
      << "\" height=\"" << f.plot_h() << "\" fill=\"none\" stroke=\"black\"/>\n";
}

void y_ticks(std::ostringstream& out, const Frame& f, double lo, double hi) {
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    const double y = f.top + f.plot_h() * (1.0 - k / 4.0);
    out << "<line x1=\"" << f.left - 4 << "\" x2=\"" << f.left << "\" y1=\"" << y << "\" y2=\""
        << y << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << f.left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
        << num(v, 3) << "</text>\n";
  }
}

}  // namespace

std::string svg_line_chart(const std::vector<Series>& series, const ChartOptions& options) {
  const Frame f(options);
  auto tx = [&](double x) { return options.log_x ? std::log10(x) : x; };
  double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
  bool has_inf = false;
  for (const auto& s : series) {
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
      if (!std::isfinite(s.y[k])) continue;
      ylo = std::min(ylo, s.y[k]);
      yhi = std::max(yhi, s.y[k]);
      if (std::isinf(s.x[k])) {
        has_inf = true;
        continue;
      }
      if (options.log_x && !(s.x[k] > 0)) continue;
      xlo = std::min(xlo, tx(s.x[k]));
      xhi = std::max(xhi, tx(s.x[k]));
    }
  }
  if (!std::isfinite(xlo)) xlo = 0, xhi = 1;
  if (!std::isfinite(ylo)) ylo = 0, yhi = 1;
  if (xhi == xlo) xhi = xlo + 1;
  if (yhi == ylo) yhi = ylo + 1;
  const double pad = 0.05 * (yhi - ylo);
  ylo -= pad;
  yhi += pad;
  // The "inf" position sits one tenth of the range past the largest finite x.
  const double xinf = xhi + 0.1 * (xhi - xlo);
  const double xmax = has_inf ? xinf : xhi;
  auto px = [&](double x) {
    const double v = std::isinf(x) ? xinf : tx(x);
    return f.left + f.plot_w() * (v - xlo) / (xmax - xlo);
  };
  auto py = [&](double y) { return f.top + f.plot_h() * (1.0 - (y - ylo) / (yhi - ylo)); };

  std::ostringstream out;
  svg_header(out, options, f);
  y_ticks(out, f, ylo, yhi);
  std::vector<double> ticks;
  for (const auto& s : series) ticks.insert(ticks.end(), s.x.begin(), s.x.end());
  std::sort(ticks.begin(), ticks.end());
  ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
  if (ticks.size() <= 12) {
    for (double t : ticks) {
      if (options.log_x && !(t > 0)) continue;
      out << "<text x=\"" << px(t) << "\" y=\"" << f.top + f.plot_h() + 15
          << "\" text-anchor=\"middle\">" << num(t, 3) << "</text>\n";
    }
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    std::ostringstream pts;
    for (std::size_t k = 0; k < series[s].x.size() && k < series[s].y.size(); ++k) {
      const double x = series[s].x[k], y = series[s].y[k];
      if (!std::isfinite(y) || (options.log_x && !(x > 0))) continue;
      pts << px(x) << ',' << py(y) << ' ';
      out << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
        << pts.str() << "\"/>\n";
    out << "<text x=\"" << f.left + f.plot_w() + 10 << "\" y=\"" << f.top + 15 + 15 * s
        << "\" fill=\"" << color << "\">" << xml_escape(series[s].name) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string svg_bar_chart(const std::vector<AggregateRow>& rows, const std::string& metric,
                          const ChartOptions& options) {
  std::vector<std::string> datasets, methods;
  for (const auto& r : rows) {
    if (r.metric != metric) continue;
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) {
      datasets.push_back(r.dataset);
    }
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
      methods.push_back(r.method);
    }
  }
  double yhi = 0.0;
  for (const auto& r : rows) {
    if (r.metric == metric && std::isfinite(r.mean)) {
      yhi = std::max(yhi, r.mean + (std::isfinite(r.std) ? r.std : 0.0));
    }
  }
  if (yhi <= 0.0) yhi = 1.0;
  yhi *= 1.1;
  const Frame f(options);
  auto py = [&](double y) { return f.top + f.plot_h() * (1.0 - y / yhi); };
  std::ostringstream out;
  svg_header(out, options, f);
  y_ticks(out, f, 0.0, yhi);
  const double group_w = f.plot_w() / std::max<std::size_t>(1, datasets.size());
  const double bar_w = group_w * 0.8 / std::max<std::size_t>(1, methods.size());
  for (std::size_t g = 0; g < datasets.size(); ++g) {
    const double gx = f.left + group_w * g + group_w * 0.1;
    out << "<text x=\"" << gx + group_w * 0.4 << "\" y=\"" << f.top + f.plot_h() + 15
        << "\" text-anchor=\"middle\">" << xml_escape(datasets[g]) << "</text>\n";
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const auto it = std::find_if(rows.begin(), rows.end(), [&](const AggregateRow& r) {
        return r.metric == metric && r.dataset == datasets[g] && r.method == methods[m];
      });
      if (it == rows.end() || !std::isfinite(it->mean)) continue;
      const double x = gx + bar_w * m;
      const double y = py(std::max(0.0, it->mean));
      out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w * 0.9
          << "\" height=\"" << f.top + f.plot_h() - y << "\" fill=\""
          << kPalette[m % std::size(kPalette)] << "\"/>\n";
      if (it->n > 1 && std::isfinite(it->std)) {
        const double cx = x + bar_w * 0.45;
        out << "<line x1=\"" << cx << "\" x2=\"" << cx << "\" y1=\""
            << py(std::max(0.0, it->mean - it->std)) << "\" y2=\"" << py(it->mean + it->std)
            << "\" stroke=\"black\"/>\n";
      }
    }
  }
  for (std::size_t m = 0; m < methods.size(); ++m) {
    out << "<text x=\"" << f.left + f.plot_w() + 10 << "\" y=\"" << f.top + 15 + 15 * m
        << "\" fill=\"" << kPalette[m % std::size(kPalette)] << "\">" << xml_escape(methods[m])
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

}  // namespace rsoft
