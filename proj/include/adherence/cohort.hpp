#pragma once

#include <array>
#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "adherence/labels.hpp"

namespace adherence::cohort {

using Date = std::chrono::year_month_day;

/// Days from civil epoch; convenient total order and difference.
int day_number(const Date& d);
int days_between(const Date& a, const Date& b);
Date parse_date(const std::string& iso);  // YYYY-MM-DD
std::string format_date(const Date& d);
Date add_days(const Date& d, int days);

enum class Sex { kFemale, kMale };
enum class Race { kAsian, kBlack, kWhite, kOther };
enum class Marital { kDivorced, kMarried, kSingle, kWidowed, kOther };

const char* to_string(Sex s);
const char* to_string(Race r);
const char* to_string(Marital m);
std::optional<Sex> sex_from_string(const std::string& s);
std::optional<Race> race_from_string(const std::string& s);
std::optional<Marital> marital_from_string(const std::string& s);

/// The ten hypertension medications screened for at the first visit,
/// and the five most common used for the outcome cohort.
const std::vector<std::string>& canonical_medications();
const std::vector<std::string>& top_five_medications();
bool contains_canonical_medication(const std::vector<std::string>& prescriptions);
bool contains_top_five_medication(const std::vector<std::string>& prescriptions);

struct Demographics {
  Sex sex = Sex::kFemale;
  double age = 0.0;
  Race race = Race::kAsian;
  Marital marital = Marital::kDivorced;
  int eci_count = 0;
  int cci_count = 0;
  double htn_duration_years = 0.0;
  int primary_visits_prior_year = 0;
};

struct Encounter {
  std::string patient_id;
  Date date{};
  std::vector<std::string> prescriptions;
  std::optional<std::string> note_text;
  std::optional<double> systolic;
  std::optional<double> diastolic;
  std::string note_id;                     // ingestion key, may be empty
  std::optional<Demographics> demographics;  // optional extra columns

  bool pressures_valid() const;
};

struct VisitPair {
  std::string patient_id;
  Encounter first;
  Encounter second;
  int interval_days = 0;
};

struct CohortRecord {
  VisitPair pair;
  Sex sex = Sex::kFemale;
  double age = 0.0;
  Race race = Race::kAsian;
  Marital marital = Marital::kDivorced;
  int eci_count = 0;
  int cci_count = 0;
  double htn_duration_years = 0.0;
  int primary_visits_prior_year = 0;
  std::optional<AdherenceLabel> adherence;
  std::optional<double> systolic_reduction;   // first minus second
  std::optional<double> diastolic_reduction;  // first minus second
  std::optional<int> outcome_normal_bp;
};

/// Sliding-window pairs of each patient's date-sorted encounters.
/// Rejects duplicate (patient, date) rows.
std::vector<VisitPair> build_pairs(const std::vector<Encounter>& encounters);

struct PairFilter {
  int min_days = 30;
  int max_days = 365;
  bool require_top_five = false;        // outcome cohort restriction
  bool require_both_pressures = false;  // outcome cohort restriction
};

/// Keeps pairs whose first visit prescribes a canonical medication, whose
/// second visit has a nonempty note, and whose interval is inside
/// [min_days, max_days] inclusive. Order-preserving, idempotent.
std::vector<VisitPair> filter_pairs(const std::vector<VisitPair>& pairs, const PairFilter& filter = {});

/// One record per patient: the most recent non-adherent pair when any
/// exists, otherwise the most recent pair. All records must be labeled.
std::vector<CohortRecord> dedup_for_independence(const std::vector<CohortRecord>& records);

/// 1 iff the second visit is normotensive (systolic < 120 and diastolic < 80).
int label_outcome(const CohortRecord& record);

/// Assemble records from pairs, pulling demographics from the first visit
/// and deriving reductions and the outcome label. Pairs whose first visit
/// lacks any demographic field are dropped.
std::vector<CohortRecord> assemble_records(const std::vector<VisitPair>& pairs);

// -- file interfaces -----------------------------------------------------

/// Encounters: CSV with header. Required columns: patient_id, date,
/// prescriptions (semicolon-joined), systolic, diastolic, note_id.
/// Optional demographic columns: sex, age, race, marital, eci_count,
/// cci_count, htn_duration_years, primary_visits_prior_year.
std::vector<Encounter> read_encounters_csv(const std::string& path);

/// Notes: JSON-lines file of {"note_id": ..., "text": ...}; attaches
/// note text to encounters in place.
void attach_notes_jsonl(const std::string& path, std::vector<Encounter>& encounters);

std::vector<std::string> cohort_csv_header();
std::vector<std::string> cohort_csv_row(const CohortRecord& r);
void write_cohort_csv(const std::string& path, const std::vector<CohortRecord>& records);
std::vector<CohortRecord> read_cohort_csv(const std::string& path);

}  // namespace adherence::cohort
