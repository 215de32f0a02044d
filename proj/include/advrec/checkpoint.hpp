#ifndef ADVREC_CHECKPOINT_HPP
#define ADVREC_CHECKPOINT_HPP

#include <string>

#include "advrec/dataio.hpp"
#include "advrec/encoder.hpp"
#include "advrec/loss.hpp"

namespace advrec {

struct Checkpoint {
  Encoder encoder;
  HardnessModel hardness;
};

// Plain text; floats are written in hex so reloading is bit-exact.
void save_checkpoint(const std::string& path, const Encoder& enc, const HardnessModel& hardness);

// The LightGCN adjacency is not stored; it is rebuilt from the train split
// of `data`, whose user and item counts must match the checkpoint.
Checkpoint load_checkpoint(const std::string& path, const InteractionSet& data);

}  // namespace advrec

#endif  // ADVREC_CHECKPOINT_HPP
