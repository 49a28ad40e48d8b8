#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "ehrtext/core/random.hpp"
#include "ehrtext/core/types.hpp"
#include "ehrtext/nn/tensor.hpp"

namespace ehrtext::testing {

/// Directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ehrtext_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

/// Norm-wise relative error ||a - b|| / max(||a||, ||b||), 0 when both vanish.
template <typename A, typename B>
double relative_error(const A& a, const B& b) {
  const double diff = (a - b).norm();
  const double scale = std::max(a.norm(), b.norm());
  return scale < 1e-300 ? 0.0 : diff / scale;
}

inline nn::Mat<double> random_mat(Rng& rng, int rows, int cols, double scale = 1.0) {
  nn::Mat<double> m(rows, cols);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline MedicalEvent make_event(const std::string& type, std::vector<std::pair<std::string, std::string>> features,
                               Minutes t) {
  return *canonicalize_event(features, EventType(type), t);
}

/// Small stay with `n` events over a handful of drug and lab concepts.
inline PatientSample random_sample(Rng& rng, int n, const std::string& id = "s") {
  static const char* kDrugs[] = {"vancomycin hcl", "heparin sodium", "insulin regular", "furosemide injection"};
  static const char* kLabs[] = {"sodium serum", "lactate arterial blood", "creatinine serum"};
  PatientSample s;
  s.stay_id = id;
  s.hospital_admission_id = "h" + id;
  s.source_dataset = "test";
  Minutes t = 0;
  for (int i = 0; i < n; ++i) {
    t += static_cast<Minutes>(rng.below(90));
    if (rng.uniform() < 0.5)
      s.events.push_back(make_event("prescriptions",
                                    {{"drug", kDrugs[rng.below(4)]},
                                     {"dose_val_rx", std::to_string(1 + rng.below(9)) + ".5"},
                                     {"route", rng.uniform() < 0.5 ? "iv" : "po"}},
                                    t));
    else
      s.events.push_back(make_event("labevents",
                                    {{"label", kLabs[rng.below(3)]},
                                     {"valuenum", std::to_string(rng.below(200)) + "." + std::to_string(rng.below(10))},
                                     {"flag", rng.uniform() < 0.3 ? "abnormal" : ""}},
                                    t));
  }
  s.intervals = compute_intervals(s.events);
  s.demographics = {60, 0, 3000, "alive", "home"};
  return s;
}

}  // namespace ehrtext::testing
