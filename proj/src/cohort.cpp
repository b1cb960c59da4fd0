#include "adherence/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "adherence/common.hpp"
#include "adherence/csv.hpp"

namespace adherence::cohort {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int day_number(const Date& d) {
  return std::chrono::sys_days(d).time_since_epoch().count();
}

int days_between(const Date& a, const Date& b) { return day_number(b) - day_number(a); }

Date parse_date(const std::string& iso) {
  int y = 0, m = 0, d = 0;
  if (std::sscanf(iso.c_str(), "%d-%d-%d", &y, &m, &d) != 3)
    throw InvalidInputError("invalid date: " + iso);
  const Date date{std::chrono::year(y), std::chrono::month(static_cast<unsigned>(m)),
                  std::chrono::day(static_cast<unsigned>(d))};
  if (!date.ok()) throw InvalidInputError("invalid date: " + iso);
  return date;
}

std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

Date add_days(const Date& d, int days) {
  return Date{std::chrono::sys_days(d) + std::chrono::days(days)};
}

const char* to_string(Sex s) { return s == Sex::kFemale ? "female" : "male"; }

const char* to_string(Race r) {
  switch (r) {
    case Race::kAsian: return "asian";
    case Race::kBlack: return "black";
    case Race::kWhite: return "white";
    case Race::kOther: return "other";
  }
  return "?";
}

const char* to_string(Marital m) {
  switch (m) {
    case Marital::kDivorced: return "divorced";
    case Marital::kMarried: return "married";
    case Marital::kSingle: return "single";
    case Marital::kWidowed: return "widowed";
    case Marital::kOther: return "other";
  }
  return "?";
}

std::optional<Sex> sex_from_string(const std::string& s) {
  const std::string v = lower(s);
  if (v == "female") return Sex::kFemale;
  if (v == "male") return Sex::kMale;
  return std::nullopt;
}

std::optional<Race> race_from_string(const std::string& s) {
  const std::string v = lower(s);
  if (v == "asian") return Race::kAsian;
  if (v == "black") return Race::kBlack;
  if (v == "white") return Race::kWhite;
  if (v == "other") return Race::kOther;
  return std::nullopt;
}

std::optional<Marital> marital_from_string(const std::string& s) {
  const std::string v = lower(s);
  if (v == "divorced") return Marital::kDivorced;
  if (v == "married") return Marital::kMarried;
  if (v == "single") return Marital::kSingle;
  if (v == "widowed") return Marital::kWidowed;
  if (v == "other") return Marital::kOther;
  return std::nullopt;
}

const std::vector<std::string>& canonical_medications() {
  static const std::vector<std::string> kList = {
      "amlodipine", "losartan",  "lisinopril",          "benazepril", "carvedilol",
      "hydralazine", "hydrochlorothiazide", "clonidine", "spironolactone", "metoprolol"};
  return kList;
}

const std::vector<std::string>& top_five_medications() {
  static const std::vector<std::string> kList = {"amlodipine", "lisinopril", "losartan",
                                                 "hydrochlorothiazide", "metoprolol"};
  return kList;
}

namespace {
bool contains_any(const std::vector<std::string>& prescriptions, const std::vector<std::string>& list) {
  for (const auto& p : prescriptions) {
    const std::string v = lower(p);
    for (const auto& med : list)
      if (v == med) return true;
  }
  return false;
}
}  // namespace

bool contains_canonical_medication(const std::vector<std::string>& prescriptions) {
  return contains_any(prescriptions, canonical_medications());
}

bool contains_top_five_medication(const std::vector<std::string>& prescriptions) {
  return contains_any(prescriptions, top_five_medications());
}

bool Encounter::pressures_valid() const {
  auto ok = [](const std::optional<double>& v) { return !v || (*v > 30.0 && *v < 350.0); };
  return ok(systolic) && ok(diastolic);
}

std::vector<VisitPair> build_pairs(const std::vector<Encounter>& encounters) {
  std::map<std::string, std::vector<const Encounter*>> by_patient;
  for (const auto& e : encounters) {
    if (!e.pressures_valid())
      throw InvalidInputError("encounter with out-of-range blood pressure: " + e.patient_id);
    by_patient[e.patient_id].push_back(&e);
  }
  std::vector<VisitPair> pairs;
  for (auto& [pid, list] : by_patient) {
    std::stable_sort(list.begin(), list.end(),
                     [](const Encounter* a, const Encounter* b) { return day_number(a->date) < day_number(b->date); });
    for (size_t i = 0; i + 1 < list.size(); ++i)
      if (day_number(list[i]->date) == day_number(list[i + 1]->date))
        throw InvalidInputError("duplicate encounter date for patient " + pid + " on " +
                                format_date(list[i]->date));
    for (size_t i = 0; i + 1 < list.size(); ++i) {
      VisitPair p;
      p.patient_id = pid;
      p.first = *list[i];
      p.second = *list[i + 1];
      p.interval_days = days_between(p.first.date, p.second.date);
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

std::vector<VisitPair> filter_pairs(const std::vector<VisitPair>& pairs, const PairFilter& filter) {
  if (filter.min_days >= filter.max_days)
    throw InvalidInputError("filter_pairs: min_days must be less than max_days");
  std::vector<VisitPair> kept;
  for (const auto& p : pairs) {
    if (p.interval_days < filter.min_days || p.interval_days > filter.max_days) continue;
    const bool has_med = filter.require_top_five ? contains_top_five_medication(p.first.prescriptions)
                                                 : contains_canonical_medication(p.first.prescriptions);
    if (!has_med) continue;
    if (!p.second.note_text || p.second.note_text->empty()) continue;
    if (filter.require_both_pressures) {
      if (!p.first.systolic || !p.first.diastolic || !p.second.systolic || !p.second.diastolic) continue;
    }
    kept.push_back(p);
  }
  return kept;
}

std::vector<CohortRecord> dedup_for_independence(const std::vector<CohortRecord>& records) {
  std::map<std::string, const CohortRecord*> chosen;
  for (const auto& r : records) {
    if (!r.adherence)
      throw InvalidInputError("dedup_for_independence: record without adherence label: " + r.pair.patient_id);
    auto [it, inserted] = chosen.emplace(r.pair.patient_id, &r);
    if (inserted) continue;
    const CohortRecord* cur = it->second;
    const bool r_na = r.adherence->non_adherent;
    const bool c_na = cur->adherence->non_adherent;
    const int r_day = day_number(r.pair.second.date);
    const int c_day = day_number(cur->pair.second.date);
    if (r_na != c_na) {
      if (r_na) it->second = &r;  // non-adherent pair wins over adherent
    } else if (r_day > c_day) {
      it->second = &r;  // most recent within the same class
    }
  }
  std::vector<CohortRecord> out;
  out.reserve(chosen.size());
  for (const auto& [pid, rec] : chosen) out.push_back(*rec);
  return out;
}

int label_outcome(const CohortRecord& record) {
  const auto& second = record.pair.second;
  if (!second.systolic || !second.diastolic)
    throw InvalidInputError("label_outcome: second visit lacks blood pressure");
  return (*second.systolic < 120.0 && *second.diastolic < 80.0) ? 1 : 0;
}

std::vector<CohortRecord> assemble_records(const std::vector<VisitPair>& pairs) {
  std::vector<CohortRecord> out;
  for (const auto& p : pairs) {
    if (!p.first.demographics) continue;  // unknown demographics are dropped
    CohortRecord r;
    r.pair = p;
    const Demographics& d = *p.first.demographics;
    r.sex = d.sex;
    r.age = d.age;
    r.race = d.race;
    r.marital = d.marital;
    r.eci_count = d.eci_count;
    r.cci_count = d.cci_count;
    r.htn_duration_years = d.htn_duration_years;
    r.primary_visits_prior_year = d.primary_visits_prior_year;
    if (p.first.systolic && p.second.systolic) r.systolic_reduction = *p.first.systolic - *p.second.systolic;
    if (p.first.diastolic && p.second.diastolic) r.diastolic_reduction = *p.first.diastolic - *p.second.diastolic;
    if (p.second.systolic && p.second.diastolic) r.outcome_normal_bp = label_outcome(r);
    out.push_back(std::move(r));
  }
  return out;
}

// -- file interfaces -----------------------------------------------------

std::vector<Encounter> read_encounters_csv(const std::string& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty()) throw InvalidInputError("empty encounters file: " + path);
  std::unordered_map<std::string, size_t> col;
  for (size_t i = 0; i < rows[0].size(); ++i) col[rows[0][i]] = i;
  for (const char* required : {"patient_id", "date", "prescriptions", "systolic", "diastolic", "note_id"})
    if (!col.count(required)) throw InvalidInputError(std::string("encounters file missing column: ") + required);

  auto get = [&](const std::vector<std::string>& row, const char* name) -> std::string {
    const auto it = col.find(name);
    if (it == col.end() || it->second >= row.size()) return "";
    return row[it->second];
  };

  std::vector<Encounter> out;
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() == 1 && row[0].empty()) continue;
    Encounter e;
    e.patient_id = get(row, "patient_id");
    e.date = parse_date(get(row, "date"));
    e.prescriptions = split(get(row, "prescriptions"), ';');
    if (auto v = csv::parse_double(get(row, "systolic"))) e.systolic = *v;
    if (auto v = csv::parse_double(get(row, "diastolic"))) e.diastolic = *v;
    e.note_id = get(row, "note_id");

    const auto sex = sex_from_string(get(row, "sex"));
    const auto race = race_from_string(get(row, "race"));
    const auto marital = marital_from_string(get(row, "marital"));
    const auto age = csv::parse_double(get(row, "age"));
    const auto eci = csv::parse_int(get(row, "eci_count"));
    const auto cci = csv::parse_int(get(row, "cci_count"));
    const auto htn = csv::parse_double(get(row, "htn_duration_years"));
    const auto pv = csv::parse_int(get(row, "primary_visits_prior_year"));
    if (sex && race && marital && age && eci && cci && htn && pv) {
      e.demographics = Demographics{*sex, *age, *race, *marital, static_cast<int>(*eci),
                                    static_cast<int>(*cci), *htn, static_cast<int>(*pv)};
    }
    out.push_back(std::move(e));
  }
  return out;
}

void attach_notes_jsonl(const std::string& path, std::vector<Encounter>& encounters) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open notes file: " + path);
  std::unordered_map<std::string, std::string> notes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    notes[j.at("note_id").get<std::string>()] = j.at("text").get<std::string>();
  }
  for (auto& e : encounters) {
    const auto it = notes.find(e.note_id);
    if (it != notes.end()) e.note_text = it->second;
  }
}

std::vector<std::string> cohort_csv_header() {
  return {"patient_id",     "first_date",      "second_date",        "interval_days",
          "prescriptions",  "sex",             "age",                "race",
          "marital",        "eci_count",       "cci_count",          "htn_duration_years",
          "primary_visits_prior_year",         "first_systolic",     "first_diastolic",
          "second_systolic", "second_diastolic", "systolic_reduction", "diastolic_reduction",
          "outcome_normal_bp", "note_id",      "note_text",          "non_adherent",
          "na_types",       "evidence",        "label_source"};
}

namespace {
std::string opt_str(const std::optional<double>& v) { return v ? csv::format_double(*v) : ""; }
std::string opt_str(const std::optional<int>& v) { return v ? std::to_string(*v) : ""; }

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back(sep);
    out += parts[i];
  }
  return out;
}
}  // namespace

std::vector<std::string> cohort_csv_row(const CohortRecord& r) {
  std::vector<std::string> row;
  row.push_back(r.pair.patient_id);
  row.push_back(format_date(r.pair.first.date));
  row.push_back(format_date(r.pair.second.date));
  row.push_back(std::to_string(r.pair.interval_days));
  row.push_back(join(r.pair.first.prescriptions, ';'));
  row.push_back(to_string(r.sex));
  row.push_back(csv::format_double(r.age));
  row.push_back(to_string(r.race));
  row.push_back(to_string(r.marital));
  row.push_back(std::to_string(r.eci_count));
  row.push_back(std::to_string(r.cci_count));
  row.push_back(csv::format_double(r.htn_duration_years));
  row.push_back(std::to_string(r.primary_visits_prior_year));
  row.push_back(opt_str(r.pair.first.systolic));
  row.push_back(opt_str(r.pair.first.diastolic));
  row.push_back(opt_str(r.pair.second.systolic));
  row.push_back(opt_str(r.pair.second.diastolic));
  row.push_back(opt_str(r.systolic_reduction));
  row.push_back(opt_str(r.diastolic_reduction));
  row.push_back(opt_str(r.outcome_normal_bp));
  row.push_back(r.pair.second.note_id);
  row.push_back(r.pair.second.note_text.value_or(""));
  if (r.adherence) {
    row.push_back(r.adherence->non_adherent ? "1" : "0");
    std::vector<std::string> types;
    for (auto t : r.adherence->types) types.push_back(to_string(t));
    row.push_back(join(types, ';'));
    row.push_back(join(r.adherence->evidence, '|'));
    row.push_back(to_string(r.adherence->source));
  } else {
    row.insert(row.end(), {"", "", "", ""});
  }
  return row;
}

void write_cohort_csv(const std::string& path, const std::vector<CohortRecord>& records) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(cohort_csv_row(r));
  csv::write_file(path, cohort_csv_header(), rows);
}

std::vector<CohortRecord> read_cohort_csv(const std::string& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty()) throw InvalidInputError("empty cohort file: " + path);
  const auto header = cohort_csv_header();
  std::unordered_map<std::string, size_t> col;
  for (size_t i = 0; i < rows[0].size(); ++i) col[rows[0][i]] = i;
  for (const auto& name : header)
    if (!col.count(name)) throw InvalidInputError("cohort file missing column: " + name);
  auto get = [&](const std::vector<std::string>& row, const std::string& name) -> std::string {
    const size_t i = col.at(name);
    return i < row.size() ? row[i] : "";
  };

  std::vector<CohortRecord> out;
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() == 1 && row[0].empty()) continue;
    CohortRecord r;
    r.pair.patient_id = get(row, "patient_id");
    r.pair.first.patient_id = r.pair.patient_id;
    r.pair.second.patient_id = r.pair.patient_id;
    r.pair.first.date = parse_date(get(row, "first_date"));
    r.pair.second.date = parse_date(get(row, "second_date"));
    r.pair.interval_days = static_cast<int>(csv::parse_int(get(row, "interval_days")).value_or(0));
    r.pair.first.prescriptions = split(get(row, "prescriptions"), ';');
    const auto sex = sex_from_string(get(row, "sex"));
    const auto race = race_from_string(get(row, "race"));
    const auto marital = marital_from_string(get(row, "marital"));
    if (!sex || !race || !marital) throw InvalidInputError("cohort row with invalid demographics");
    r.sex = *sex;
    r.race = *race;
    r.marital = *marital;
    r.age = csv::parse_double(get(row, "age")).value_or(0.0);
    r.eci_count = static_cast<int>(csv::parse_int(get(row, "eci_count")).value_or(0));
    r.cci_count = static_cast<int>(csv::parse_int(get(row, "cci_count")).value_or(0));
    r.htn_duration_years = csv::parse_double(get(row, "htn_duration_years")).value_or(0.0);
    r.primary_visits_prior_year =
        static_cast<int>(csv::parse_int(get(row, "primary_visits_prior_year")).value_or(0));
    if (auto v = csv::parse_double(get(row, "first_systolic"))) r.pair.first.systolic = *v;
    if (auto v = csv::parse_double(get(row, "first_diastolic"))) r.pair.first.diastolic = *v;
    if (auto v = csv::parse_double(get(row, "second_systolic"))) r.pair.second.systolic = *v;
    if (auto v = csv::parse_double(get(row, "second_diastolic"))) r.pair.second.diastolic = *v;
    if (auto v = csv::parse_double(get(row, "systolic_reduction"))) r.systolic_reduction = *v;
    if (auto v = csv::parse_double(get(row, "diastolic_reduction"))) r.diastolic_reduction = *v;
    if (auto v = csv::parse_int(get(row, "outcome_normal_bp"))) r.outcome_normal_bp = static_cast<int>(*v);
    r.pair.second.note_id = get(row, "note_id");
    const std::string note = get(row, "note_text");
    if (!note.empty()) r.pair.second.note_text = note;
    const std::string na = get(row, "non_adherent");
    if (!na.empty()) {
      AdherenceLabel label;
      label.non_adherent = (na == "1");
      for (const auto& t : split(get(row, "na_types"), ';')) {
        if (t == "missed") label.types.insert(NonAdherenceType::kMissed);
        else if (t == "different_dose") label.types.insert(NonAdherenceType::kDifferentDose);
        else if (t == "different_medication") label.types.insert(NonAdherenceType::kDifferentMedication);
        else if (t == "different_timing") label.types.insert(NonAdherenceType::kDifferentTiming);
        else throw InvalidInputError("unknown non-adherence type: " + t);
      }
      label.evidence = split(get(row, "evidence"), '|');
      const std::string src = get(row, "label_source");
      if (src == "llm") label.source = LabelSource::kLlm;
      else if (src == "annotation") label.source = LabelSource::kAnnotation;
      else label.source = LabelSource::kMock;
      r.adherence = std::move(label);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace adherence::cohort
