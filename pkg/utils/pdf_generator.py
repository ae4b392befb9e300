"""
PDF Generator for Calibration Reports
Renders intrinsics, distortion, extrinsics, residuals and warnings of a
calibration (plus optional precision statistics) as a PDF
"""

from io import BytesIO
from typing import List, Optional

from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from utils.file_formats import CalibrationFile, MetricsFile, TransformBlock


def _fmt(value, digits: int = 4) -> str:
    if value is None:
        return "n/a"
    return f"{value:.{digits}f}"


class CalibrationReportGenerator:
    """Generate PDF reports for procam calibrations"""

    def __init__(self):
        self.styles = getSampleStyleSheet()
        self._setup_custom_styles()

    def _setup_custom_styles(self):
        """Setup custom paragraph styles"""
        self.styles.add(ParagraphStyle(
            name='CustomTitle',
            parent=self.styles['Heading1'],
            fontSize=22,
            textColor=colors.HexColor('#1e40af'),
            spaceAfter=24,
            alignment=TA_CENTER
        ))

        self.styles.add(ParagraphStyle(
            name='SectionHeader',
            parent=self.styles['Heading2'],
            fontSize=15,
            textColor=colors.HexColor('#4338ca'),
            spaceAfter=10,
            spaceBefore=12
        ))

        self.styles.add(ParagraphStyle(
            name='Warning',
            parent=self.styles['Normal'],
            textColor=colors.HexColor('#b45309'),
            leftIndent=20
        ))

    def _table(self, rows: List[List[str]], shade: str = '#dbeafe', header: bool = False) -> Table:
        table = Table(rows, colWidths=None)
        style = [
            ('FONTNAME', (0, 0), (-1, -1), 'Helvetica'),
            ('FONTSIZE', (0, 0), (-1, -1), 10),
            ('ALIGN', (0, 0), (-1, -1), 'LEFT'),
            ('GRID', (0, 0), (-1, -1), 1, colors.grey),
            ('PADDING', (0, 0), (-1, -1), 6),
        ]
        if header:
            style += [
                ('BACKGROUND', (0, 0), (-1, 0), colors.HexColor(shade)),
                ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
            ]
        else:
            style.append(('BACKGROUND', (0, 0), (0, -1), colors.HexColor(shade)))
        table.setStyle(TableStyle(style))
        return table

    def _transform_rows(self, name: str, block: TransformBlock) -> List[str]:
        euler = block.euler_xyz_deg or [None, None, None]
        return [
            name,
            ", ".join(_fmt(v, 3) for v in block.translation),
            ", ".join(_fmt(v, 3) for v in euler),
        ]

    def generate_calibration_report(
        self,
        calibration: CalibrationFile,
        metrics: Optional[MetricsFile] = None,
        title: str = "Projector-Camera Calibration Report",
    ) -> BytesIO:
        """
        Generate the calibration report as PDF

        Args:
            calibration: Calibration document
            metrics: Precision statistics over several poses (optional)
            title: Report title

        Returns:
            BytesIO object containing PDF data
        """
        buffer = BytesIO()
        doc = SimpleDocTemplate(
            buffer, pagesize=A4, topMargin=0.5 * inch, bottomMargin=0.5 * inch, invariant=1
        )
        story = [Paragraph(title, self.styles['CustomTitle'])]

        diagnostics = calibration.diagnostics
        residuals = calibration.residuals
        converged = diagnostics.get('converged', True)
        baseline = sum(v * v for v in calibration.rt_procam.translation) ** 0.5

        story.append(Paragraph("Summary", self.styles['SectionHeader']))
        summary = self._table([
            ['Optimizer', 'Converged ✓' if converged else 'Not converged ✗'],
            ['Procam baseline |T|', f"{_fmt(baseline, 3)} mm"],
            ['Camera reprojection (mean / RMS)',
             f"{_fmt(residuals.get('camera_mean_px'))} / {_fmt(residuals.get('camera_rms_px'))} px"],
            ['Projector reprojection (mean / RMS)',
             f"{_fmt(residuals.get('projector_mean_px'))} / {_fmt(residuals.get('projector_rms_px'))} px"],
            ['Stereo reprojection (mean)', f"{_fmt(residuals.get('stereo_mean_px'))} px"],
            ['Tool', calibration.tool_version],
        ], shade='#f3f4f6')
        story.append(summary)
        story.append(Spacer(1, 0.2 * inch))

        story.append(Paragraph("Intrinsics", self.styles['SectionHeader']))
        K_c, K_p = calibration.K_c, calibration.K_p
        story.append(self._table([
            ['Device', 'f (px)', 'alpha', 'u0 (px)', 'v0 (px)'],
            ['Camera', _fmt(K_c.f, 3), _fmt(K_c.alpha, 5), _fmt(K_c.u0, 3), _fmt(K_c.v0, 3)],
            ['Projector', _fmt(K_p.f, 3), _fmt(K_p.alpha, 5), _fmt(K_p.u0, 3), _fmt(K_p.v0, 3)],
        ], header=True))
        story.append(Spacer(1, 0.2 * inch))

        story.append(Paragraph("Camera Radial Distortion", self.styles['SectionHeader']))
        dist = calibration.distortion
        story.append(self._table([
            ['Centre (px)', f"{_fmt(dist.center[0], 3)}, {_fmt(dist.center[1], 3)}"],
            ['k1', f"{dist.k1:.6e}"],
            ['k2', f"{dist.k2:.6e}"],
        ], shade='#d1fae5'))
        story.append(Spacer(1, 0.2 * inch))

        story.append(Paragraph("Extrinsics", self.styles['SectionHeader']))
        story.append(self._table([
            ['Transform', 'T (mm)', 'psi, nu, phi (deg)'],
            self._transform_rows('Board → camera', calibration.rt_c),
            self._transform_rows('Board → projector', calibration.rt_p),
            self._transform_rows('Camera → projector', calibration.rt_procam),
        ], header=True))
        story.append(Spacer(1, 0.2 * inch))

        if metrics is not None:
            story.append(Paragraph("Translation Precision", self.styles['SectionHeader']))
            story.append(self._table([
                ['σX', 'σY', 'σZ', 'σT', 'σ|T|'],
                [_fmt(metrics.sigma_X), _fmt(metrics.sigma_Y), _fmt(metrics.sigma_Z),
                 _fmt(metrics.sigma_T), _fmt(metrics.sigma_absT)],
            ], header=True, shade='#fef3c7'))
            story.append(Paragraph(
                f"<i>{len(metrics.poses)} poses; values in mm</i>", self.styles['Normal']
            ))
            if metrics.pose_sets is not None:
                sets = metrics.pose_sets
                story.append(Paragraph(
                    f"{sets.count} pose sets of at least {sets.min_size} poses: "
                    f"mean σT {_fmt(sets.sigma_T_mean)}, max σT {_fmt(sets.sigma_T_max)}",
                    self.styles['Normal'],
                ))
            story.append(Spacer(1, 0.2 * inch))

        warnings = diagnostics.get('warnings', [])
        if warnings:
            story.append(Paragraph("Warnings", self.styles['SectionHeader']))
            for warning in warnings:
                text = warning.replace('&', '&amp;').replace('<', '&lt;').replace('>', '&gt;')
                story.append(Paragraph(f"• {text}", self.styles['Warning']))

        doc.build(story)

        buffer.seek(0)
        return buffer


# Create global instance
pdf_generator = CalibrationReportGenerator()
