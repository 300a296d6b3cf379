#pragma once

#include <string>
#include <vector>

#include "egfr/cohort.hpp"

namespace egfr {

enum class TemplateKind { fill_in_blank, descriptive, open_ended, role_playing };

std::string template_kind_name(TemplateKind k);

// Body text uses {next_day_diff} and {data_text} placeholders; kinds other
// than open_ended also carry the {{eGFR}} blank marker, which survives
// rendering as the fill target.
struct PromptTemplate {
  int template_id = 0;  // 1..4
  TemplateKind kind = TemplateKind::fill_in_blank;
  std::string body;
};

// The four built-in templates, ids 1..4 in the order
// fill-in-blank, descriptive, open-ended, role-playing.
const std::vector<PromptTemplate>& default_templates();

// Throws TemplateError when placeholder invariants are violated.
void validate_template(const PromptTemplate& t);

PromptTemplate load_template_file(const std::string& path, int template_id,
                                  TemplateKind kind);

struct PromptInstance {
  int template_id = 0;
  std::string rendered_text;
  std::string window_id;
  std::string chart_digest;
};

// Fixed-order name-value listing of the window's latest labs, the last 3
// eGFR values with dates, and the patient's static details.
std::string compose_data_text(const PredictionWindow& window,
                              const PatientProfile& profile);

PromptInstance render_prompt(const PromptTemplate& tmpl, const PredictionWindow& window,
                             const std::string& data_text,
                             const std::string& chart_digest);

}  // namespace egfr
