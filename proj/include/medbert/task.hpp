#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace medbert {

// binary: LOS > 2 days; category: <2, 2-7, >7 days; real: clipped LOS in days.
enum class Task : std::uint8_t { binary, category, real };

std::string_view to_string(Task t);
std::optional<Task> parse_task(std::string_view s);
std::size_t task_outputs(Task t);

}  // namespace medbert
