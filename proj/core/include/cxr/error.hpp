#pragma once

#include <stdexcept>
#include <string>

namespace cxr {

/// Base type for all pipeline errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// imaging
class AllMasked : public Error { public: using Error::Error; };
class ZeroDimension : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };

// denoise
class NonPositiveU : public Error { public: using Error::Error; };
class Diverged : public Error { public: using Error::Error; };

// dataset
class DuplicatePath : public Error { public: using Error::Error; };
class CountMismatch : public Error { public: using Error::Error; };
class TooFewSamples : public Error { public: using Error::Error; };

// imbalance
class EmptyClass : public Error { public: using Error::Error; };
class TargetBelowCurrent : public Error { public: using Error::Error; };

// model
class ShapeMismatch : public Error { public: using Error::Error; };
class UnknownLayer : public Error { public: using Error::Error; };
class FormatVersionMismatch : public Error { public: using Error::Error; };
class EmptyManifest : public Error { public: using Error::Error; };

// metrics
class NonFinite : public Error { public: using Error::Error; };
class InvalidTarget : public Error { public: using Error::Error; };
class LabelOutOfRange : public Error { public: using Error::Error; };

// explain
class TooFewPerturbations : public Error { public: using Error::Error; };

// cli
class MissingRun : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };

}  // namespace cxr
