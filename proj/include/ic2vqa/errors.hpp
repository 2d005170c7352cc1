#pragma once

#include <stdexcept>
#include <string>

namespace ic2vqa {

// Root of every error raised by the library. Callers that only need to report
// a failure catch this; the subclasses exist so tests and the CLI can tell
// the failure modes apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class UnsupportedFormatError : public Error {
 public:
  using Error::Error;
};

class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, std::size_t frame_index)
      : Error(what), frame_index_(frame_index) {}
  std::size_t frame_index() const { return frame_index_; }

 private:
  std::size_t frame_index_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class DegenerateFeatureError : public Error {
 public:
  DegenerateFeatureError(const std::string& what, std::size_t frame_index)
      : Error(what), frame_index_(frame_index) {}
  std::size_t frame_index() const { return frame_index_; }

 private:
  std::size_t frame_index_;
};

class CapabilityError : public Error {
 public:
  using Error::Error;
};

class UnsupportedOperationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

class MissingCellError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

}  // namespace ic2vqa
