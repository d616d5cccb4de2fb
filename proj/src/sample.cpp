#include "blendnet/sample.hpp"

#include "blendnet/errors.hpp"

namespace blendnet {

std::string to_string(Task t) {
  switch (t) {
    case Task::open_ended:
      return "open_ended";
    case Task::count:
      return "count";
    case Task::multi_choice:
      return "multi_choice";
  }
  return "unknown";
}

Task parse_task(const std::string& s) {
  if (s == "open_ended") return Task::open_ended;
  if (s == "count") return Task::count;
  if (s == "multi_choice") return Task::multi_choice;
  throw ConfigError("unknown task '" + s + "' (expected open_ended|count|multi_choice)");
}

}  // namespace blendnet
