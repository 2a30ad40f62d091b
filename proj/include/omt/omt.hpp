#pragma once

#include "omt/anyres.hpp"
#include "omt/attention.hpp"
#include "omt/error.hpp"
#include "omt/image.hpp"
#include "omt/lr_schedule.hpp"
#include "omt/matrix.hpp"
#include "omt/mixture.hpp"
#include "omt/needle.hpp"
#include "omt/numeric.hpp"
#include "omt/packer.hpp"
#include "omt/prompt.hpp"
#include "omt/rng.hpp"
#include "omt/rope.hpp"
#include "omt/svlm.hpp"
#include "omt/tokenizer.hpp"
