#pragma once

#include <string>

#include <json.hpp>

#include "emenv/em.hpp"
#include "emenv/inference.hpp"
#include "emenv/selection.hpp"
#include "emenv/simulate.hpp"

namespace emenv {

// Structured output documents are versioned and self-describing; matrices
// are serialized with explicit shapes.
inline constexpr const char* kReportSchema = "emenv/1";

nlohmann::json matrix_to_json(const Mat& m);
nlohmann::json vector_to_json(const Vec& v);
Mat matrix_from_json(const nlohmann::json& j);

nlohmann::json fit_to_json(const EnvelopeFit& fit);
nlohmann::json selection_to_json(const SelectionReport& report);
nlohmann::json bootstrap_to_json(const BootstrapResult& result);
nlohmann::json summary_to_json(const MseSummary& summary);

// Serialization used for every emitted document: sorted keys, 2-space
// indent, trailing newline.
std::string dump_report(const nlohmann::json& doc);

}  // namespace emenv
