#pragma once

#include <string>

#include "json.hpp"
#include "tailbalance/metrics.hpp"
#include "tailbalance/trainer.hpp"

// JSON and CSV forms of configs, reports and traces. JSON readers are strict:
// unknown keys and wrongly typed values raise invalid-argument.
namespace tailbalance {

using Json = nlohmann::ordered_json;

Json to_json(const BalancerConfig& cfg);
BalancerConfig balancer_from_json(const Json& j);

Json to_json(const StageConfig& cfg);
StageConfig stage_from_json(const Json& j);

Json to_json(const MetricsReport& m);
/// Per-epoch traces and snapshots; wall time is left to the caller.
Json to_json(const RunReport& r);
/// Reads back the config and traces written by to_json(RunReport); metrics
/// and wall time are not restored.
RunReport run_report_from_json(const Json& j);

/// "epoch,class_id,norm"
std::string norm_trace_csv(const RunReport& r);
/// "epoch,mean_loss,learning_rate"
std::string loss_trace_csv(const RunReport& r);
/// "class_id,accuracy,marginal_likelihood"
std::string per_class_csv(const MetricsReport& m);

/// RFC 4180 quoting: fields containing a comma, quote or line break are
/// wrapped in quotes with inner quotes doubled.
std::string csv_field(const std::string& s);
/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace tailbalance
