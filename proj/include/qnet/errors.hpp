#pragma once

#include <stdexcept>
#include <string>

namespace qnet {

enum class Errc {
  InvalidSpec,
  NonTransientRouting,
  ZeroTraffic,
  BadStationMap,
  IncompleteOrder,
  DuplicateClass,
  TooFewBatches,
  UnstableQueue,
  NoConvergence,
  FluidUnstable,
  NonConvergentBoundary,
  HorizonExceeded,
  ControlEvaluationFailure,
  IoError,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::NonTransientRouting: return "NonTransientRouting";
    case Errc::ZeroTraffic: return "ZeroTraffic";
    case Errc::BadStationMap: return "BadStationMap";
    case Errc::IncompleteOrder: return "IncompleteOrder";
    case Errc::DuplicateClass: return "DuplicateClass";
    case Errc::TooFewBatches: return "TooFewBatches";
    case Errc::UnstableQueue: return "UnstableQueue";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::FluidUnstable: return "FluidUnstable";
    case Errc::NonConvergentBoundary: return "NonConvergentBoundary";
    case Errc::HorizonExceeded: return "HorizonExceeded";
    case Errc::ControlEvaluationFailure: return "ControlEvaluationFailure";
    case Errc::IoError: return "IoError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& msg) { throw Error(code, msg); }

}  // namespace qnet
