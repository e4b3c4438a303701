#include "cdm/permutation.hpp"

#include <sstream>

#include "cdm/error.hpp"

namespace cdm {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_axis(int axis) {
  if (axis < 0 || axis > 2) throw ValidationError("axis " + std::to_string(axis) + " out of range [0, 2]");
}

int axis_of(char c) {
  switch (c) {
    case 'x':
      return 0;
    case 'y':
      return 1;
    case 'z':
      return 2;
    default:
      throw ValidationError(std::string("unknown axis '") + c + "'");
  }
}

const char* axis_name(int a) { return a == 0 ? "x" : a == 1 ? "y" : "z"; }

}  // namespace

VoxelPermutation VoxelPermutation::flip(int axis) {
  check_axis(axis);
  VoxelPermutation p;
  p.steps_.push_back(Flip{axis});
  return p;
}

VoxelPermutation VoxelPermutation::rotate90(int axis_a, int axis_b, int quarter_turns) {
  check_axis(axis_a);
  check_axis(axis_b);
  if (axis_a == axis_b) throw ValidationError("rotation plane needs two distinct axes");
  VoxelPermutation p;
  p.steps_.push_back(Rotate90{axis_a, axis_b, quarter_turns});
  return p;
}

VoxelPermutation VoxelPermutation::translate(std::int64_t dx, std::int64_t dy, std::int64_t dz) {
  VoxelPermutation p;
  p.steps_.push_back(Translate{dx, dy, dz});
  return p;
}

VoxelPermutation VoxelPermutation::then(const VoxelPermutation& next) const {
  VoxelPermutation p = *this;
  p.steps_.insert(p.steps_.end(), next.steps_.begin(), next.steps_.end());
  return p;
}

void VoxelPermutation::validate(const Dims& dims) const {
  for (const auto& step : steps_) {
    std::visit(Overloaded{
                   [](const Flip& f) { check_axis(f.axis); },
                   [&](const Rotate90& r) {
                     check_axis(r.axis_a);
                     check_axis(r.axis_b);
                     if (r.axis_a == r.axis_b) throw ValidationError("rotation plane needs two distinct axes");
                     if (dims[r.axis_a] != dims[r.axis_b]) {
                       throw ValidationError(std::string("90-degree rotation in the ") + axis_name(r.axis_a) +
                                             axis_name(r.axis_b) + " plane needs equal extents, dims are " +
                                             to_string(dims));
                     }
                   },
                   [](const Translate&) {},
               },
               step);
  }
}

VoxelPermutation VoxelPermutation::parse(const std::string& text) {
  VoxelPermutation out;
  if (text.empty() || text == "identity") return out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, '+')) {
    if (tok.rfind("flip-", 0) == 0 && tok.size() == 6) {
      out = out.then(flip(axis_of(tok[5])));
    } else if (tok.rfind("rot90-", 0) == 0 && tok.size() >= 8) {
      int turns = 1;
      if (tok.size() > 8) {
        if (tok[8] != ':') throw ValidationError("bad rotation '" + tok + "'");
        turns = std::stoi(tok.substr(9));
      }
      out = out.then(rotate90(axis_of(tok[6]), axis_of(tok[7]), turns));
    } else if (tok.rfind("shift:", 0) == 0) {
      std::stringstream vs(tok.substr(6));
      std::int64_t d[3];
      char c1 = 0, c2 = 0;
      if (!(vs >> d[0] >> c1 >> d[1] >> c2 >> d[2]) || c1 != ',' || c2 != ',') {
        throw ValidationError("bad shift '" + tok + "', expected shift:dx,dy,dz");
      }
      out = out.then(translate(d[0], d[1], d[2]));
    } else {
      throw ValidationError("unknown transform '" + tok + "'");
    }
  }
  return out;
}

std::string VoxelPermutation::describe() const {
  if (steps_.empty()) return "identity";
  std::string s;
  for (const auto& step : steps_) {
    if (!s.empty()) s += "+";
    std::visit(Overloaded{
                   [&](const Flip& f) { s += std::string("flip-") + axis_name(f.axis); },
                   [&](const Rotate90& r) {
                     s += std::string("rot90-") + axis_name(r.axis_a) + axis_name(r.axis_b);
                     if (r.quarter_turns != 1) s += ":" + std::to_string(r.quarter_turns);
                   },
                   [&](const Translate& t) {
                     s += "shift:" + std::to_string(t.dx) + "," + std::to_string(t.dy) + "," + std::to_string(t.dz);
                   },
               },
               step);
  }
  return s;
}

}  // namespace cdm
