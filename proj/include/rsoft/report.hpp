#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsoft/experiments.hpp"

namespace rsoft {

/// "method,dataset,metric,mean,std,n,failures" plus one line per row.
std::string aggregate_csv(const std::vector<AggregateRow>& rows);
nlohmann::json aggregate_json(const std::vector<AggregateRow>& rows);

/// "temperature,value,error" plus one line per grid point.
std::string grid_csv(const GridResult& grid);
nlohmann::json grid_json(const GridResult& grid);

/// Markdown comparison table: methods as columns, a bold header row per
/// metric followed by one row per dataset, cells "mean ± std". `cell_suffix`
/// keyed "method|dataset|metric" appends " - <text>" (a selected temperature,
/// say). Cells missing from `rows` show "n/a".
std::string method_table_markdown(const std::vector<AggregateRow>& rows,
                                  const std::vector<std::string>& methods,
                                  const std::map<std::string, std::string>& cell_suffix = {},
                                  const std::string& note = {});

/// "step,loss" lines.
std::string loss_trace_csv(const RunRecord& record);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  int width = 640;
  int height = 400;
};

/// Polyline chart. Non-finite x values (such as T = inf) are drawn at the
/// right edge with an "inf" tick.
std::string svg_line_chart(const std::vector<Series>& series, const ChartOptions& options);

/// Grouped bars with error bars: one group per dataset, one bar per method.
std::string svg_bar_chart(const std::vector<AggregateRow>& rows, const std::string& metric,
                          const ChartOptions& options);

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace rsoft
