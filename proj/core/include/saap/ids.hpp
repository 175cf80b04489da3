#pragma once

#include <compare>
#include <functional>
#include <ostream>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

namespace saap {

// String identifier tagged by the entity it names, so a RunId cannot be passed
// where a DocId is expected.
template <typename Tag>
class Id {
 public:
  Id() = default;
  explicit Id(std::string value) : value_(std::move(value)) {}

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend bool operator==(const Id&, const Id&) = default;
  friend auto operator<=>(const Id&, const Id&) = default;

  friend std::ostream& operator<<(std::ostream& os, const Id& id) {
    return os << id.value_;
  }
  friend void to_json(nlohmann::json& j, const Id& id) { j = id.value_; }
  friend void from_json(const nlohmann::json& j, Id& id) {
    id.value_ = j.get<std::string>();
  }

 private:
  std::string value_;
};

using DocId = Id<struct DocIdTag>;
using RunId = Id<struct RunIdTag>;
using RecordId = Id<struct RecordIdTag>;
using ProfileId = Id<struct ProfileIdTag>;
using FindingId = Id<struct FindingIdTag>;
using CaseId = Id<struct CaseIdTag>;

}  // namespace saap

template <typename Tag>
struct std::hash<saap::Id<Tag>> {
  std::size_t operator()(const saap::Id<Tag>& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
