from sfgsim import db, create_app, models  # noqa: F401 (registers RunRecord)

# Create the Flask app
app = create_app()
# Create the run-record table when no migration has been applied
with app.app_context():
    db.create_all()

if __name__ == '__main__':
    app.run(debug=True, host='127.0.0.1', port=8080)
