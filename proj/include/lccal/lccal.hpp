#pragma once

#include "lccal/costvolume.hpp"
#include "lccal/error.hpp"
#include "lccal/geometry.hpp"
#include "lccal/image_io.hpp"
#include "lccal/io.hpp"
#include "lccal/losses.hpp"
#include "lccal/model.hpp"
#include "lccal/parallel.hpp"
#include "lccal/perturb.hpp"
#include "lccal/pipeline.hpp"
#include "lccal/point_cloud.hpp"
#include "lccal/projection.hpp"
#include "lccal/tensor.hpp"
