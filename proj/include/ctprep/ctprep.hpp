#pragma once

#include "ctprep/affine.hpp"
#include "ctprep/config.hpp"
#include "ctprep/dicom.hpp"
#include "ctprep/dicom_writer.hpp"
#include "ctprep/error.hpp"
#include "ctprep/grid.hpp"
#include "ctprep/io.hpp"
#include "ctprep/manifest.hpp"
#include "ctprep/nifti.hpp"
#include "ctprep/phantom.hpp"
#include "ctprep/pipeline.hpp"
#include "ctprep/png.hpp"
#include "ctprep/reg_qc.hpp"
#include "ctprep/registration.hpp"
#include "ctprep/report.hpp"
#include "ctprep/standardize.hpp"
#include "ctprep/triage.hpp"
#include "ctprep/volume.hpp"
