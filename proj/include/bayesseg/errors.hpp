#ifndef BAYESSEG_ERRORS_HPP
#define BAYESSEG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bayesseg {

// Malformed series data (bad CSV row, non-finite observation, ...).
class InputError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Configuration schema violation (unknown key, missing key, bad value).
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// An observed covariance block is numerically singular (condition > 1e12).
// `date` is filled by callers that know which time step failed.
class SingularityError : public std::runtime_error {
  public:
    explicit SingularityError(const std::string& what, long date = -1)
        : std::runtime_error(what), date_(date) {}
    long date() const { return date_; }

  private:
    long date_;
};

}  // namespace bayesseg

#endif
