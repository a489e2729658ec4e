#pragma once

#include <map>
#include <string>

#include "paint/controllers.hpp"
#include "paint/patient_sim.hpp"

namespace paint {

inline constexpr int kPatientConfigVersion = 1;

/// Everything the simulator and demonstrator need for one virtual patient.
struct PatientProfile {
  PatientParams params;
  PidConfig pid;
  MealSchedule meals;
};

/// Flat `key = value` file with `[section]` headers. Comments start with '#'.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text);
  static KeyValueFile load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  const std::string& get(const std::string& section, const std::string& key) const;
  double number(const std::string& section, const std::string& key) const;
  double number_or(const std::string& section, const std::string& key, double fallback) const;
  std::vector<std::string> sections() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

/// Loads a profile by patient id ("adult", "adolescent", "child").
PatientProfile load_patient(const KeyValueFile& file, const std::string& id);
PatientProfile load_patient(const std::string& id);

/// Path of the shipped parameter file; `PAINT_PATIENT_CONFIG` overrides it.
std::string default_patient_config_path();

}  // namespace paint
