#include "asurv/types.hpp"

namespace asurv {

int PatientRecord::last_biopsy_interval() const {
  for (const auto& iv : intervals) {
    if (iv.reclassified.value_or(false)) return iv.index;
  }
  return intervals.empty() ? 0 : intervals.back().index;
}

bool PatientRecord::reclassified_ever() const {
  for (const auto& iv : intervals)
    if (iv.reclassified.value_or(false)) return true;
  return false;
}

bool PatientRecord::had_surgery() const {
  for (const auto& iv : intervals)
    if (iv.surgery) return true;
  return false;
}

IopFlags IopFlags::parse(std::string_view text) {
  if (text == "none") return {false, false};
  if (text == "b") return {true, false};
  if (text == "s") return {false, true};
  if (text == "bs" || text == "sb") return {true, true};
  throw InputError("unknown IOP variant '" + std::string(text) + "' (expected none|b|s|bs)");
}

std::string IopFlags::str() const {
  if (biopsy && surgery) return "bs";
  if (biopsy) return "b";
  if (surgery) return "s";
  return "none";
}

}  // namespace asurv
