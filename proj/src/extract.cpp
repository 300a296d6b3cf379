#include "egfr/extract.hpp"

#include <cctype>
#include <vector>

#include "egfr/numfmt.hpp"

namespace egfr {

const char* const kSecondaryExtractionPrefix =
    "Return only the predicted eGFR number from this text: ";

std::string extract_method_name(ExtractMethod m) {
  switch (m) {
    case ExtractMethod::pattern: return "pattern";
    case ExtractMethod::secondary_model: return "secondary-model";
    case ExtractMethod::failed: return "failed";
  }
  return "?";
}

namespace {

struct NumberToken {
  double value;
  size_t begin;
  size_t end;  // one past the last digit
};

// Unsigned decimal literals; a token never starts inside an identifier
// (so "1.73m²" is found, but the "73" inside it is not a separate token).
std::vector<NumberToken> find_numbers(const std::string& s) {
  std::vector<NumberToken> out;
  size_t i = 0;
  while (i < s.size()) {
    if (std::isdigit(static_cast<unsigned char>(s[i]))) {
      size_t begin = i;
      // a '/' prefix marks a denominator (e.g. the 1.73 in the unit itself)
      bool denominator = begin > 0 && s[begin - 1] == '/';
      while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
      if (i + 1 < s.size() && s[i] == '.' &&
          std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
        ++i;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
      }
      auto v = parse_double(std::string_view(s).substr(begin, i - begin));
      if (v && !denominator) out.push_back({*v, begin, i});
    } else {
      ++i;
    }
  }
  return out;
}

bool ci_equal(char a, char b) {
  return std::tolower(static_cast<unsigned char>(a)) ==
         std::tolower(static_cast<unsigned char>(b));
}

bool ci_starts_with(const std::string& s, size_t pos, const std::string& prefix) {
  if (pos + prefix.size() > s.size()) return false;
  for (size_t i = 0; i < prefix.size(); ++i)
    if (!ci_equal(s[pos + i], prefix[i])) return false;
  return true;
}

size_t ci_find(const std::string& s, const std::string& needle, size_t from = 0) {
  if (needle.empty() || needle.size() > s.size()) return std::string::npos;
  for (size_t i = from; i + needle.size() <= s.size(); ++i)
    if (ci_starts_with(s, i, needle)) return i;
  return std::string::npos;
}

}  // namespace

std::optional<double> extract_pattern(const std::string& raw_text,
                                      const ExtractionRange& range) {
  auto in_range = [&](double v) { return v >= range.min && v <= range.max; };
  const auto numbers = find_numbers(raw_text);
  if (numbers.empty()) return std::nullopt;

  const std::string unit = "mL/min/1.73m²";

  // Tier 1: number immediately before the unit (whitespace allowed between).
  std::optional<double> best;
  for (const auto& n : numbers) {
    size_t p = n.end;
    while (p < raw_text.size() &&
           std::isspace(static_cast<unsigned char>(raw_text[p])))
      ++p;
    if (ci_starts_with(raw_text, p, unit) && in_range(n.value)) best = n.value;
  }
  if (best) return best;

  // Tier 2: first number after "predicted value ... is"; last such match wins.
  auto find_word_is = [&](size_t from) {
    for (size_t p = ci_find(raw_text, "is", from); p != std::string::npos;
         p = ci_find(raw_text, "is", p + 1)) {
      bool left_ok = p == 0 || !std::isalpha(static_cast<unsigned char>(raw_text[p - 1]));
      bool right_ok = p + 2 >= raw_text.size() ||
                      !std::isalpha(static_cast<unsigned char>(raw_text[p + 2]));
      if (left_ok && right_ok) return p;
    }
    return std::string::npos;
  };
  for (size_t pos = ci_find(raw_text, "predicted value"); pos != std::string::npos;
       pos = ci_find(raw_text, "predicted value", pos + 1)) {
    size_t is_pos = find_word_is(pos);
    if (is_pos == std::string::npos || is_pos > pos + 120) continue;
    for (const auto& n : numbers) {
      if (n.begin > is_pos && n.begin < is_pos + 40 && in_range(n.value)) {
        best = n.value;
        break;
      }
    }
  }
  if (best) return best;

  // Tier 3: any in-range number, last occurrence.
  for (const auto& n : numbers)
    if (in_range(n.value)) best = n.value;
  return best;
}

std::optional<double> extract_secondary(const std::string& raw_text,
                                        const SecondaryAsk& ask,
                                        const ExtractionRange& range) {
  if (!ask) return std::nullopt;
  std::string reply = ask(kSecondaryExtractionPrefix + raw_text);
  return extract_pattern(reply, range);
}

Prediction extract_prediction(const std::string& raw_text, const std::string& window_id,
                              int template_id, const std::string& backend_id,
                              int attempt_index, const ExtractionRange& range,
                              const SecondaryAsk& ask) {
  Prediction p;
  p.window_id = window_id;
  p.template_id = template_id;
  p.backend_id = backend_id;
  p.attempt_index = attempt_index;

  if (auto v = extract_pattern(raw_text, range)) {
    p.value = *v;
    p.method = ExtractMethod::pattern;
    return p;
  }
  if (auto v = extract_secondary(raw_text, ask, range)) {
    p.value = *v;
    p.method = ExtractMethod::secondary_model;
    return p;
  }
  p.method = ExtractMethod::failed;
  return p;
}

}  // namespace egfr
