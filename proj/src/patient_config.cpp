#include "paint/patient_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "paint/error.hpp"

#ifndef PAINT_DEFAULT_PATIENT_CONFIG
#define PAINT_DEFAULT_PATIENT_CONFIG "config/patients.ini"
#endif

namespace paint {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text) {
  KeyValueFile file;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw Error(ErrorCode::kInvalidArgument, "malformed section at line " + std::to_string(lineno));
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "expected key = value at line " + std::to_string(lineno));
    }
    file.values_[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return file;
}

KeyValueFile KeyValueFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

bool KeyValueFile::has(const std::string& section, const std::string& key) const {
  const auto it = values_.find(section);
  return it != values_.end() && it->second.count(key) > 0;
}

const std::string& KeyValueFile::get(const std::string& section, const std::string& key) const {
  const auto it = values_.find(section);
  if (it == values_.end()) throw Error(ErrorCode::kNotFound, "missing section [" + section + "]");
  const auto kv = it->second.find(key);
  if (kv == it->second.end()) {
    throw Error(ErrorCode::kNotFound, "missing key '" + key + "' in [" + section + "]");
  }
  return kv->second;
}

double KeyValueFile::number(const std::string& section, const std::string& key) const {
  const std::string& raw = get(section, key);
  try {
    std::size_t used = 0;
    const double v = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "'" + key + "' is not a number: " + raw);
  }
}

double KeyValueFile::number_or(const std::string& section, const std::string& key,
                               double fallback) const {
  return has(section, key) ? number(section, key) : fallback;
}

std::vector<std::string> KeyValueFile::sections() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : values_) out.push_back(name);
  return out;
}

PatientProfile load_patient(const KeyValueFile& file, const std::string& id) {
  const int version = static_cast<int>(file.number("", "version"));
  if (version != kPatientConfigVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "patient config version " + std::to_string(version) + " is not supported");
  }
  const Cohort cohort = cohort_from_string(id);
  if (!file.has(id, "weight_kg")) throw Error(ErrorCode::kNotFound, "no patient '" + id + "'");

  PatientProfile profile;
  PatientParams& p = profile.params;
  p.id = cohort;
  p.weight_kg = file.number(id, "weight_kg");
  p.basal_equilibrium_u_per_min = file.number(id, "basal_equilibrium_u_per_min");
  p.fasting_glucose_mgdl = file.number(id, "fasting_glucose_mgdl");
  p.insulin_sensitivity = file.number(id, "insulin_sensitivity");
  p.glucose_effectiveness = file.number(id, "glucose_effectiveness");
  p.insulin_action_rate = file.number(id, "insulin_action_rate");
  p.insulin_clearance = file.number(id, "insulin_clearance");
  p.t_max_insulin_min = file.number(id, "t_max_insulin_min");
  p.t_max_meal_min = file.number(id, "t_max_meal_min");
  p.carb_bioavailability = file.number(id, "carb_bioavailability");
  p.carb_ratio = file.number(id, "carb_ratio");
  p.correction_factor = file.number(id, "correction_factor");
  p.distribution_volume_glucose = file.number(id, "distribution_volume_glucose");
  p.distribution_volume_insulin = file.number(id, "distribution_volume_insulin");
  p.validate();

  PidConfig& pid = profile.pid;
  pid.k_p = file.number(id, "pid.k_p");
  pid.k_i = file.number(id, "pid.k_i");
  pid.k_d = file.number(id, "pid.k_d");
  pid.g_targ_mgdl = file.number_or(id, "pid.g_targ_mgdl", 140.0);
  pid.integral_clamp = file.number(id, "pid.integral_clamp");
  pid.max_basal = 5.0 * p.basal_equilibrium_u_per_min;
  pid.initial_integral = pid.k_i > 0.0 ? p.basal_equilibrium_u_per_min / pid.k_i : 0.0;
  pid.validate();

  for (int slot = 0;; ++slot) {
    const std::string prefix = "meal" + std::to_string(slot) + ".";
    if (!file.has(id, prefix + "time_min")) break;
    profile.meals.slots.push_back({file.number(id, prefix + "time_min"),
                                   file.number(id, prefix + "time_std_min"),
                                   file.number(id, prefix + "carbs_g"),
                                   file.number(id, prefix + "carbs_std_g")});
  }
  if (profile.meals.slots.empty()) profile.meals = default_meal_schedule(p.weight_kg);
  profile.meals.validate();
  return profile;
}

std::string default_patient_config_path() {
  if (const char* env = std::getenv("PAINT_PATIENT_CONFIG"); env && *env) return env;
  return PAINT_DEFAULT_PATIENT_CONFIG;
}

PatientProfile load_patient(const std::string& id) {
  return load_patient(KeyValueFile::load(default_patient_config_path()), id);
}

}  // namespace paint
