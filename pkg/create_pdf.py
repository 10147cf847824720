"""
create_pdf.py

This module renders an evaluation report as a PDF document with the FPDF library:
a title, a run specification block, the per-class results table (precision,
recall and f-score in percent with the trailing average row) and the confusion
matrix.

Key Functions:
- create_pdf(report, pdf_path, details): Main function to generate the PDF report.
- section_title(title): Adds a filled section heading.
- element_spec_design(): Sets the design for the specification block.
- results_design(): Sets the design for table headings.

Dependencies:
- datetime
- fpdf
- evaluator

Usage:
This module is called by the eval command when `--pdf` is given; the file is
written next to the text and CSV reports.
"""
from datetime import datetime

from fpdf import FPDF

from evaluator import AVERAGE_ROW

# the confusion matrix is only drawn while its columns fit on a landscape page
MAX_CONFUSION_CLASSES = 16


def create_pdf(report, pdf_path, details=None, title="Audio Event Recognition Report"):
    """
    Creates a PDF report for an EvaluationReport.

    Args:
        report (EvaluationReport): Scores to render.
        pdf_path (str | Path): Output file.
        details (dict): Specification rows (architecture, feature mode, checkpoint, ...).
        title (str): Page title.

    Returns:
        str: The path written.
    """
    pdf = FPDF()
    pdf.add_page(orientation="L")
    cell_height = 6

    pdf.set_font('Arial', 'B', 16)
    pdf.cell(270, 8, title, align="C")
    pdf.ln(12)

    def section_title(text):
        pdf.set_draw_color(32, 73, 176)
        pdf.set_line_width(1)
        pdf.set_font('Arial', 'B', 12)
        pdf.set_text_color(255, 255, 255)
        pdf.set_fill_color(32, 73, 176)
        pdf.cell(76, cell_height + 2, "  " + text, 1, 1, 'L', True)
        pdf.ln(2)

    def element_spec_design():
        pdf.set_line_width(0.1)
        pdf.set_font('Arial', '', 8)
        pdf.set_text_color(0, 0, 0)
        pdf.set_draw_color(0, 0, 0)
        pdf.set_fill_color(255, 255, 255)

    def results_design():
        pdf.set_draw_color(0, 0, 0)
        pdf.set_text_color(0, 0, 0)
        pdf.set_fill_color(230, 239, 255)
        pdf.set_font('Arial', 'B', 9)
        pdf.set_line_width(0.3)

    section_title("Specification")
    element_spec_design()
    rows = [("Date:", datetime.now().strftime("%d %b %Y")),
            ("Voting:", report.voting.value),
            ("Files:", str(report.num_files))]
    rows += [(f"{key}:", str(value)) for key, value in (details or {}).items()]
    # two label/value pairs per line
    col_width = [40, 90, 40, 90]
    for start in range(0, len(rows), 2):
        for offset, (label, value) in enumerate(rows[start:start + 2]):
            pdf.set_font('Arial', 'B', 8)
            pdf.cell(col_width[2 * offset], cell_height, "  " + label, 1, 0, 'L', True)
            pdf.set_font('Arial', '', 8)
            pdf.cell(col_width[2 * offset + 1], cell_height, "  " + value[:60], 1, 0, 'L', True)
        pdf.ln()
    pdf.ln(5)

    section_title("Results (F-Score in %)")
    headings = ["Class", "Precision (%)", "Recall (%)", "F-Score (%)", "Files"]
    col_width = [80, 35, 35, 35, 25]

    def table_header():
        results_design()
        for index, heading in enumerate(headings):
            pdf.cell(col_width[index], 8, heading, 1, 0, 'C', True)
        pdf.ln()

    table_header()
    for row in report.to_dataframe().itertuples(index=False):
        if pdf.get_y() > 185:
            pdf.add_page(orientation="L")
            table_header()
        average = row[0] == AVERAGE_ROW
        pdf.set_font('Arial', 'B' if average else '', 8)
        if average:
            pdf.set_fill_color(230, 239, 255)
        else:
            pdf.set_fill_color(255, 255, 255)
        values = [str(row[0]), f"{100 * row.precision:.1f}", f"{100 * row.recall:.1f}",
                  f"{100 * row.fscore:.1f}", str(row.support)]
        for index, item in enumerate(values):
            pdf.cell(col_width[index], cell_height, item, 1, 0, 'L' if index == 0 else 'C', True)
        pdf.ln()

    num_classes = len(report.class_names)
    if num_classes <= MAX_CONFUSION_CLASSES:
        if pdf.get_y() > 185 - cell_height * (num_classes + 2):
            pdf.add_page(orientation="L")
        else:
            pdf.ln(5)
        section_title("Confusion Matrix (rows: true, columns: predicted)")
        first = 50
        width = min(14, (270 - first) // num_classes)
        results_design()
        pdf.cell(first, 8, "", 1, 0, 'C', True)
        for c in range(num_classes):
            pdf.cell(width, 8, str(c), 1, 0, 'C', True)
        pdf.ln()
        element_spec_design()
        for c, name in enumerate(report.class_names):
            pdf.set_font('Arial', 'B', 8)
            pdf.cell(first, cell_height, f"{c}: {name}"[:30], 1, 0, 'L', True)
            pdf.set_font('Arial', '', 8)
            for count in report.confusion[c]:
                pdf.cell(width, cell_height, str(int(count)), 1, 0, 'C', True)
            pdf.ln()

    pdf_path = str(pdf_path)
    pdf.output(pdf_path, "F")
    return pdf_path
