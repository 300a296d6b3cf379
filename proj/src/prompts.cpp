#include "egfr/prompts.hpp"

#include <fstream>
#include <sstream>

#include "egfr/numfmt.hpp"

namespace egfr {

std::string template_kind_name(TemplateKind k) {
  switch (k) {
    case TemplateKind::fill_in_blank: return "fill-in-blank";
    case TemplateKind::descriptive: return "descriptive";
    case TemplateKind::open_ended: return "open-ended";
    case TemplateKind::role_playing: return "role-playing";
  }
  return "?";
}

const std::vector<PromptTemplate>& default_templates() {
  static const std::vector<PromptTemplate> templates = {
      {1, TemplateKind::fill_in_blank,
       "Based on the provided plot, the x-axis represents the dates of each eGFR "
       "measurement, while the y-axis shows the eGFR values in units of "
       "mL/min/1.73m². This plot depicts the trajectory of a single patient's "
       "kidney function, as measured by the estimated Glomerular Filtration Rate "
       "(eGFR). Please fill in the blank: The most likely predicted value for the "
       "next {next_day_diff} days is {{eGFR}}mL/min/1.73m². The latest data for "
       "the patient: {data_text}."},
      {2, TemplateKind::descriptive,
       "The x-axis represents the dates of each eGFR measurement, while the "
       "y-axis shows the eGFR values in units of mL/min/1.73m². This plot "
       "depicts the trajectory of a single patient's kidney function, as "
       "measured by the estimated Glomerular Filtration Rate (eGFR). Please "
       "provide the most likely predicted value for the next {next_day_diff} "
       "days as {{eGFR}}mL/min/1.73m². The latest data for the patient: "
       "{data_text}."},
      {3, TemplateKind::open_ended,
       "The plot you see maps out the progression of kidney function for a "
       "single patient, using estimated Glomerular Filtration Rate (eGFR) values "
       "measured over various dates. Each point on the x-axis represents the "
       "date of measurement, and the corresponding y-axis value reflects the "
       "eGFR in mL/min/1.73m². Given the latest data provided: {data_text}, "
       "could you explore potential trends and predict how the patient's eGFR "
       "might evolve over the next {next_day_diff} days?"},
      {4, TemplateKind::role_playing,
       "Imagine you are a nephrologist analyzing the patient's estimated "
       "Glomerular Filtration Rate trajectory. Based on your expertise, please "
       "predict the next {next_day_diff} days point's eGFR value in "
       "mL/min/1.73m² for this patient as {{eGFR}}mL/min/1.73m². Consider the "
       "trends and patterns observed in the plot, as well as any additional "
       "clinical information available. The latest data for the patient: "
       "{data_text}."},
  };
  return templates;
}

namespace {

size_t count_occurrences(const std::string& hay, const std::string& needle) {
  size_t n = 0;
  for (size_t pos = hay.find(needle); pos != std::string::npos;
       pos = hay.find(needle, pos + needle.size()))
    ++n;
  return n;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

}  // namespace

void validate_template(const PromptTemplate& t) {
  if (t.template_id < 1)
    throw TemplateError("template id must be >= 1");
  if (count_occurrences(t.body, "{next_day_diff}") != 1)
    throw TemplateError("template " + std::to_string(t.template_id) +
                        ": body must contain {next_day_diff} exactly once");
  if (count_occurrences(t.body, "{data_text}") != 1)
    throw TemplateError("template " + std::to_string(t.template_id) +
                        ": body must contain {data_text} exactly once");
  bool has_blank = t.body.find("{{eGFR}}") != std::string::npos;
  if (t.kind == TemplateKind::open_ended && has_blank)
    throw TemplateError("open-ended template must not contain the {{eGFR}} marker");
  if (t.kind != TemplateKind::open_ended && !has_blank)
    throw TemplateError(template_kind_name(t.kind) +
                        " template must contain the {{eGFR}} marker");
}

PromptTemplate load_template_file(const std::string& path, int template_id,
                                  TemplateKind kind) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open template file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  std::string body = ss.str();
  while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
  PromptTemplate t{template_id, kind, body};
  validate_template(t);
  return t;
}

std::string compose_data_text(const PredictionWindow& window,
                              const PatientProfile& profile) {
  if (window.observed.size() < 3)
    throw ValidationError("data text needs at least 3 observed visits, window " +
                          window.id());
  const VisitRecord& latest = window.observed.back();
  auto lab = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string("not available");
  };

  std::ostringstream os;
  os << "BUN: " << lab(latest.bun) << "; ";
  os << "Phosphorus: " << lab(latest.phosphorus) << "; ";
  os << "UACR: " << lab(latest.uacr) << "; ";
  os << "eGFR in the latest 3 visits: ";
  size_t n = window.observed.size();
  for (size_t i = n - 3; i < n; ++i) {
    const auto& v = window.observed[i];
    if (i != n - 3) os << ", ";
    os << format_double(v.egfr) << " (" << format_iso_date(v.date) << ")";
  }
  os << "; ";
  os << "Age: " << format_double(profile.age_at_baseline) << "; ";
  os << "Gender: " << gender_name(profile.gender) << "; ";
  os << "CKD stage: " << profile.ckd_stage << "; ";
  os << "CKD cause: " << (profile.ckd_cause.empty() ? "unknown" : profile.ckd_cause)
     << "; ";

  auto active = [](const std::map<std::string, bool>& flags,
                   const std::vector<std::string>& order) {
    std::string out;
    for (const auto& name : order) {
      auto it = flags.find(name);
      if (it != flags.end() && it->second) {
        if (!out.empty()) out += ", ";
        out += name;
      }
    }
    return out.empty() ? std::string("none") : out;
  };
  os << "Comorbidities: " << active(profile.comorbidities, comorbidity_names())
     << " (Charlson index " << profile.charlson_index << "); ";
  os << "Medications: " << active(profile.medications, medication_names());
  return os.str();
}

PromptInstance render_prompt(const PromptTemplate& tmpl, const PredictionWindow& window,
                             const std::string& data_text,
                             const std::string& chart_digest) {
  validate_template(tmpl);
  // Shield the blank marker so single-brace scanning below cannot trip on it.
  std::string text = replace_all(tmpl.body, "{{eGFR}}", "\x01eGFR\x01");
  text = replace_all(text, "{next_day_diff}", std::to_string(window.next_day_diff));
  text = replace_all(text, "{data_text}", data_text);

  size_t open = text.find('{');
  if (open != std::string::npos) {
    size_t close = text.find('}', open);
    throw TemplateError("unresolved placeholder in template " +
                        std::to_string(tmpl.template_id) + ": " +
                        text.substr(open, close == std::string::npos
                                              ? 20
                                              : close - open + 1));
  }
  text = replace_all(text, "\x01eGFR\x01", "{{eGFR}}");

  PromptInstance inst;
  inst.template_id = tmpl.template_id;
  inst.rendered_text = std::move(text);
  inst.window_id = window.id();
  inst.chart_digest = chart_digest;
  return inst;
}

}  // namespace egfr
