#include "narrshift/narrative.hpp"

namespace narrshift {

std::string_view to_string(Narrative n) {
  return n == Narrative::individualistic ? "individualistic" : "collectivistic";
}

std::string_view to_code(Narrative n) { return n == Narrative::individualistic ? "ind" : "col"; }

std::optional<Narrative> parse_narrative(std::string_view text) {
  if (text == "individualistic" || text == "ind") return Narrative::individualistic;
  if (text == "collectivistic" || text == "col") return Narrative::collectivistic;
  return std::nullopt;
}

Narrative opposite(Narrative n) {
  return n == Narrative::individualistic ? Narrative::collectivistic : Narrative::individualistic;
}

Narrative target_of(Direction d) {
  return d == Direction::c_to_i ? Narrative::individualistic : Narrative::collectivistic;
}

Narrative source_of(Direction d) { return opposite(target_of(d)); }

Direction direction_to(Narrative target) {
  return target == Narrative::individualistic ? Direction::c_to_i : Direction::i_to_c;
}

std::string_view to_string(Direction d) { return d == Direction::c_to_i ? "C->I" : "I->C"; }

std::optional<Direction> parse_direction(std::string_view text) {
  if (text == "C->I" || text == "c2i" || text == "C2I" || text == "c->i") return Direction::c_to_i;
  if (text == "I->C" || text == "i2c" || text == "I2C" || text == "i->c") return Direction::i_to_c;
  return std::nullopt;
}

}  // namespace narrshift
