#pragma once

#include <functional>
#include <optional>
#include <string>

#include "egfr/errors.hpp"

namespace egfr {

struct ExtractionRange {
  double min = 1.0;
  double max = 200.0;
};

enum class ExtractMethod { pattern, secondary_model, failed };

std::string extract_method_name(ExtractMethod m);

// One extracted eGFR forecast for a (window, template, backend, attempt) cell.
struct Prediction {
  std::string window_id;
  int template_id = 0;
  std::string backend_id;
  int attempt_index = 1;
  double value = 0;  // meaningful only when method != failed
  ExtractMethod method = ExtractMethod::failed;
};

// Deterministic pattern pass. Preference order:
//   1. number immediately preceding "mL/min/1.73m²"
//   2. number following "predicted value ... is"
//   3. any number in the text
// Within a tier, in-range candidates only, last occurrence wins.
std::optional<double> extract_pattern(const std::string& raw_text,
                                      const ExtractionRange& range = {});

// Callable that sends the fixed extraction prompt to a backend and returns
// its reply text.
using SecondaryAsk = std::function<std::string(const std::string& prompt)>;

extern const char* const kSecondaryExtractionPrefix;

// Runs the secondary pass when the pattern pass found nothing.
std::optional<double> extract_secondary(const std::string& raw_text,
                                        const SecondaryAsk& ask,
                                        const ExtractionRange& range = {});

// Full two-stage extraction producing a Prediction (method=failed when both
// passes come up empty). `ask` may be null to skip the secondary pass.
Prediction extract_prediction(const std::string& raw_text, const std::string& window_id,
                              int template_id, const std::string& backend_id,
                              int attempt_index, const ExtractionRange& range = {},
                              const SecondaryAsk& ask = {});

}  // namespace egfr
