#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>

#include <fmt/format.h>

#include "choicealign/agents.hpp"
#include "choicealign/csv.hpp"
#include "choicealign/error.hpp"
#include "choicealign/io.hpp"

namespace choicealign::agents {
namespace {

// Answer order on the wire versus canonical order.
constexpr std::array<Activity, kNumActivities> kAnswerOrder = {Activity::kWork, Activity::kLeisure,
                                                               Activity::kSleep, Activity::kOther};

std::string format_age(double age) {
  if (age == std::floor(age)) return fmt::format("{:.0f}", age);
  return fmt::format("{}", age);
}

std::string spouse_sentence(SpouseStatus s) {
  switch (s) {
    case SpouseStatus::kSpouse: return "You live with a spouse.";
    case SpouseStatus::kPartner: return "You live with an unmarried partner.";
    case SpouseStatus::kNone: return "You live with no spouse or unmarried partner.";
  }
  throw_data(fmt::format("prompt slot {{Spouse Status}}: invalid value {}", static_cast<int>(s)));
}

template <typename Fn>
std::string slot(std::string_view name, Fn&& fn) {
  try {
    return std::string(fn());
  } catch (const Error& e) {
    throw_data(fmt::format("prompt slot {{{}}}: {}", name, e.what()));
  }
}

}  // namespace

const std::string kSystemInstruction =
    "You are an American making daily time allocation decisions across three activities: work, leisure, and "
    "other. Your goal is to maximize overall happiness within the 1,440 minutes available each day.";

const std::string kFormatReminder =
    "Reply with exactly four numbers in square brackets, for example [480, 300, 540, 120].";

std::string Prompt::user() const {
  if (findings.empty()) return persona + " " + instruction;
  return persona + "\n\n" + findings + "\n\n" + instruction;
}

Prompt render_prompt(const PersonaRecord& p) {
  if (!std::isfinite(p.age) || p.age <= 0.0) throw_data("prompt slot {Age}: age must be a positive number");
  if (!std::isfinite(p.weekly_income) || p.weekly_income < 0.0) {
    throw_data("prompt slot {Income}: weekly income must be a non-negative number");
  }
  const auto gender = slot("Gender Identity", [&] {
    if (p.gender != Gender::kMale && p.gender != Gender::kFemale) throw_data("invalid gender value");
    return gender_label(p.gender);
  });
  const auto race = slot("Race", [&] { return race_label(p.race); });
  const auto edu = slot("Educational Level", [&] { return education_label(p.education); });

  Prompt out;
  out.system = kSystemInstruction;
  out.persona = fmt::format(
      "You are a {}, {} years old, ethnically identified as {}. Your highest level of education is {}, and your "
      "weekly income is ${:.2f}. {}",
      gender, format_age(p.age), race, edu, p.weekly_income, spouse_sentence(p.spouse));
  out.instruction =
      "Based on this background, how would you allocate your time across Work, Leisure, Sleep and Personal Care, "
      "and Other in a typical day? Please answer in the format: [Work, Leisure, Sleep and Personal Care, Other], "
      "using numbers to indicate minutes.";
  return out;
}

Prompt with_format_reminder(Prompt p) {
  p.instruction += " " + kFormatReminder;
  return p;
}

std::string prompt_hash(const Prompt& p) { return io::sha256_hex(p.system + "\n\n" + p.user()); }

ParsedAllocation parse_allocation(std::string_view text, double budget) {
  static const std::regex tuple(
      R"(\[\s*([0-9]+(?:\.[0-9]*)?)\s*,\s*([0-9]+(?:\.[0-9]*)?)\s*,\s*([0-9]+(?:\.[0-9]*)?)\s*,\s*([0-9]+(?:\.[0-9]*)?)\s*\])");
  ParsedAllocation out;
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(text.begin(), text.end(), m, tuple)) {
    out.failure = "no bracketed tuple of four numbers";
    return out;
  }
  std::array<double, kNumActivities> minutes{};
  for (std::size_t k = 0; k < kNumActivities; ++k) {
    const std::string field = m[static_cast<int>(k) + 1].str();
    minutes[index_of(kAnswerOrder[k])] = csv::parse_double(field, "minutes");
  }
  const double sum = std::accumulate(minutes.begin(), minutes.end(), 0.0);
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    out.failure = "allocation sums to zero";
    return out;
  }
  if (sum != budget) {
    for (double& v : minutes) v = v * budget / sum;
    out.flags.renormalized = true;
  }
  if (std::any_of(minutes.begin(), minutes.end(), [](double v) { return v == 0.0; })) {
    for (double& v : minutes) v = std::max(v, 1.0);
    const double floored_sum = std::accumulate(minutes.begin(), minutes.end(), 0.0);
    for (double& v : minutes) v = v * budget / floored_sum;
    out.flags.floored = true;
  }
  try {
    out.allocation = Allocation::from_minutes(minutes, budget);
  } catch (const Error& e) {
    out.failure = e.what();
  }
  return out;
}

std::array<long long, kNumActivities> largest_remainder(const std::array<double, kNumActivities>& shares,
                                                        long long total) {
  std::array<long long, kNumActivities> out{};
  std::array<double, kNumActivities> frac{};
  long long assigned = 0;
  for (std::size_t j = 0; j < kNumActivities; ++j) {
    const double exact = shares[j] * static_cast<double>(total);
    out[j] = static_cast<long long>(std::floor(exact));
    frac[j] = exact - static_cast<double>(out[j]);
    assigned += out[j];
  }
  std::array<std::size_t, kNumActivities> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  long long left = total - assigned;
  for (std::size_t i = 0; left > 0; i = (i + 1) % kNumActivities, --left) ++out[order[i]];
  for (std::size_t i = 0; left < 0; i = (i + 1) % kNumActivities) {
    // shares summing a hair above 1 can overshoot after flooring
    const std::size_t j = order[kNumActivities - 1 - i];
    if (out[j] > 0) {
      --out[j];
      ++left;
    }
  }
  return out;
}

std::string format_answer(const std::array<long long, kNumActivities>& minutes) {
  return fmt::format("[{}, {}, {}, {}]", minutes[index_of(Activity::kWork)], minutes[index_of(Activity::kLeisure)],
                     minutes[index_of(Activity::kSleep)], minutes[index_of(Activity::kOther)]);
}

}  // namespace choicealign::agents
