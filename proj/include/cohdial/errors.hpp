#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cohdial {

// Every failure the library reports derives from Error. kind() is the
// machine-readable class name printed by the command-line tool.
class Error : public std::runtime_error {
  public:
    Error(std::string kind, const std::string &message);

    const std::string &kind() const noexcept { return kind_; }

  private:
    std::string kind_;
};

#define COHDIAL_DECLARE_ERROR(Name)                                                                \
    class Name : public Error {                                                                    \
      public:                                                                                      \
        explicit Name(const std::string &message) : Error(#Name, message) {}                      \
    }

COHDIAL_DECLARE_ERROR(EmptyCorpus);
COHDIAL_DECLARE_ERROR(EmptySequence);
COHDIAL_DECLARE_ERROR(UndefinedCoherence);
COHDIAL_DECLARE_ERROR(InvalidDistribution);
COHDIAL_DECLARE_ERROR(DegenerateDistribution);
COHDIAL_DECLARE_ERROR(MissingScore);
COHDIAL_DECLARE_ERROR(InsufficientData);
COHDIAL_DECLARE_ERROR(DivergedTraining);
COHDIAL_DECLARE_ERROR(ShapeError);
COHDIAL_DECLARE_ERROR(NumericalError);
COHDIAL_DECLARE_ERROR(InputError);
COHDIAL_DECLARE_ERROR(IoError);
COHDIAL_DECLARE_ERROR(ConfigError);

#undef COHDIAL_DECLARE_ERROR

// Malformed input at a known line (1-based).
class ParseError : public Error {
  public:
    ParseError(std::size_t line, const std::string &message);

    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

} // namespace cohdial
