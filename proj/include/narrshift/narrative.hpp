#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace narrshift {

enum class Narrative { individualistic, collectivistic };

// "individualistic" / "collectivistic"
std::string_view to_string(Narrative n);
// "ind" / "col", the constant used inside logic atoms.
std::string_view to_code(Narrative n);
// Accepts either spelling.
std::optional<Narrative> parse_narrative(std::string_view text);
Narrative opposite(Narrative n);

// A shift direction is identified by its target: C->I targets
// individualistic, I->C targets collectivistic.
enum class Direction { c_to_i, i_to_c };

Narrative target_of(Direction d);
Narrative source_of(Direction d);
Direction direction_to(Narrative target);
std::string_view to_string(Direction d);  // "C->I" / "I->C"
std::optional<Direction> parse_direction(std::string_view text);

}  // namespace narrshift
