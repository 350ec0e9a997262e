#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sevsim {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// backend
class TransportError : public Error {
 public:
  using Error::Error;
};
class ProtocolError : public Error {
 public:
  using Error::Error;
};
class ScriptExhausted : public Error {
 public:
  using Error::Error;
};

// structured-output extraction
class NoObjectFound : public Error {
 public:
  using Error::Error;
};
class MalformedJson : public Error {
 public:
  using Error::Error;
};
class MissingKeys : public Error {
 public:
  explicit MissingKeys(std::vector<std::string> keys)
      : Error("object is missing required keys: " + join(keys)), missing(std::move(keys)) {}
  std::vector<std::string> missing;

 private:
  static std::string join(const std::vector<std::string>& keys) {
    std::string out;
    for (const auto& k : keys) {
      if (!out.empty()) out += ", ";
      out += k;
    }
    return out;
  }
};

// prompt catalog
class CatalogError : public Error {
 public:
  using Error::Error;
};

// simulation
class ParseFailure : public Error {
 public:
  using Error::Error;
};
class IndexGap : public Error {
 public:
  using Error::Error;
};

// persistence
class IoError : public Error {
 public:
  using Error::Error;
};
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::size_t line_no)
      : Error(what + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
  std::size_t line;
};

// splitting
class EmptyStratum : public Error {
 public:
  using Error::Error;
};
class SizeExceeded : public Error {
 public:
  using Error::Error;
};

// annotation
class OutOfRange : public Error {
 public:
  explicit OutOfRange(long long v)
      : Error("success label out of range: " + std::to_string(v)), value(v) {}
  long long value;
};
class AllRejected : public Error {
 public:
  using Error::Error;
};
class DuplicateId : public Error {
 public:
  using Error::Error;
};
class BadValue : public Error {
 public:
  BadValue(const std::string& what, std::size_t row_no)
      : Error(what + " (row " + std::to_string(row_no) + ")"), row(row_no) {}
  std::size_t row;
};
class DegenerateAgreement : public Error {
 public:
  using Error::Error;
};

// detection
class Ambiguous : public Error {
 public:
  using Error::Error;
};
class Unparseable : public Error {
 public:
  using Error::Error;
};
class LabelMismatch : public Error {
 public:
  using Error::Error;
};
class BadDecision : public Error {
 public:
  explicit BadDecision(const std::string& v) : Error("bad worker decision: \"" + v + "\""), value(v) {}
  std::string value;
};
class ScoreOutOfRange : public Error {
 public:
  explicit ScoreOutOfRange(long long v)
      : Error("maliciousness score out of range: " + std::to_string(v)), value(v) {}
  long long value;
};
class WorkerError : public Error {
 public:
  WorkerError(const std::string& kind, const std::string& cause)
      : Error(kind + " worker failed: " + cause), worker_kind(kind) {}
  std::string worker_kind;
};

// evaluation
class UnknownId : public Error {
 public:
  using Error::Error;
};
class MissingAnnotations : public Error {
 public:
  using Error::Error;
};
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

// configuration
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sevsim
