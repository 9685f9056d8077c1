#pragma once

#include "cat/augment.hpp"
#include "cat/bank.hpp"
#include "cat/config.hpp"
#include "cat/image.hpp"
#include "cat/image_io.hpp"
#include "cat/instances.hpp"
#include "cat/log.hpp"
#include "cat/loss.hpp"
#include "cat/relation.hpp"
#include "cat/rng.hpp"
#include "cat/sim.hpp"
#include "cat/storage.hpp"
#include "cat/teacher.hpp"
