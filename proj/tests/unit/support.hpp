#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "medbert/event_model.hpp"

namespace medbert::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(std::filesystem::temp_directory_path() / ("medbert_unit_" + tag + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline MedicalEvent lab(std::string code, double value, double t) {
  return MedicalEvent{EventType::lab, std::move(code), value, t};
}
inline MedicalEvent vital(std::string code, double value, double t) {
  return MedicalEvent{EventType::vital, std::move(code), value, t};
}
inline MedicalEvent med(std::string code, double t) { return MedicalEvent{EventType::medication, std::move(code), {}, t}; }

inline Admission admission(std::string id, double los_days = 3.0) {
  Admission a;
  a.admission_id = std::move(id);
  a.demographics = Demographics{31, Sex::male, false};
  a.los_days = los_days;
  return a;
}

}  // namespace medbert::test
